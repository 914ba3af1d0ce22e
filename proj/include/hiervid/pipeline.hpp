#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hiervid/clip_io.hpp"
#include "hiervid/manifest.hpp"
#include "hiervid/tensor.hpp"

namespace hiervid {

// Pipeline constants from the training settings: 12 fps, 48-frame windows,
// 128x128 resize, 96x96 crops.
inline constexpr double kTargetFps = 12.0;
inline constexpr int64_t kWindowFrames = 48;
inline constexpr int64_t kResizeTo = 128;
inline constexpr int64_t kCropTo = 96;

struct Clip {
  RawClip frames;
  double fps = 0.0;
};

enum class PipelineMode { train, eval };

// Picks source indices round(k * src_fps / target_fps), k = 0, 1, ... until
// the source is exhausted; duplicates frames when upsampling.
Clip resample_fps(const Clip& clip, double target_fps = kTargetFps);
std::vector<int64_t> resample_indices(int64_t n_frames, double src_fps,
                                      double target_fps);

// T >= 48: train picks a uniform random start, eval the centered start.
// T < 48: replicates the first frame ceil((48-T)/2) times in front and the
// last frame floor((48-T)/2) times behind.
Clip select_window(const Clip& clip, PipelineMode mode, uint64_t sample_seed,
                   int64_t length = kWindowFrames);

// Per-frame bilinear interpolation with half-pixel centers; channels
// independent; round-half-up back to u8.
Clip resize_bilinear(const Clip& clip, int64_t out_h = kResizeTo,
                     int64_t out_w = kResizeTo);

// One offset per clip. Center mode uses (floor((H-96)/2), floor((W-96)/2)).
Clip crop(const Clip& clip, PipelineMode mode, uint64_t sample_seed,
          int64_t size = kCropTo);

// pixel/255 * 2 - 1, layout channels-first [3,T,H,W].
void normalize_into(const Clip& clip, float* out);
Tensor<float> normalize(const Clip& clip);

// token -> id with fixed specials <pad>=0 <bos>=1 <eos>=2 <unk>=3
struct Vocabulary {
  static constexpr int64_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  std::vector<std::string> id_to_token;  // dense ids from 0
  std::unordered_map<std::string, int64_t> token_to_id;

  int64_t size() const { return static_cast<int64_t>(id_to_token.size()); }
  int64_t id_of(const std::string& token) const;  // <unk> when absent
  const std::string& token_of(int64_t id) const;
};

// Vocabulary from the training split only; lowercase whitespace tokens in
// first-appearance order after the specials.
Vocabulary build_vocab(const std::vector<ManifestEntry>& train_manifest);

// lowercase, whitespace split, wrapped <bos> ... <eos>; unknowns -> <unk>
std::vector<int64_t> tokenize(const std::string& caption, const Vocabulary& vocab);
std::string detokenize(const std::vector<int64_t>& ids, const Vocabulary& vocab);

struct Batch {
  Tensor<float> video;                // [B,3,48,96,96] in [-1,1]
  std::vector<int64_t> group;         // [B]
  std::vector<int64_t> category;      // [B]
  std::vector<int64_t> caption_ids;   // [B, max_len] row-major, <pad> filled
  std::vector<int64_t> caption_len;   // non-<pad> tokens per row
  int64_t max_len = 0;
  int64_t size = 0;
};

// Loads each sample's clip, applies resample -> window -> resize -> crop ->
// normalize with the per-sample seed global_seed ^ hash(id) ^ epoch, and
// pads tokenized captions to the batch maximum.
Batch collate(const std::vector<ManifestEntry>& samples,
              const std::string& data_root, const Vocabulary& vocab,
              PipelineMode mode, uint64_t global_seed, uint64_t epoch);

// The five-stage transform for one already-loaded clip.
Tensor<float> preprocess_clip(const Clip& clip, PipelineMode mode,
                              uint64_t sample_seed);

uint64_t sample_pipeline_seed(uint64_t global_seed, const std::string& id,
                              uint64_t epoch);

}  // namespace hiervid
