#include "hiervid/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <sstream>

#include "hiervid/rng.hpp"
#include "hiervid/threading.hpp"

namespace hiervid {

std::vector<int64_t> resample_indices(int64_t n_frames, double src_fps,
                                      double target_fps) {
  HV_REQUIRE(src_fps > 0.0, "resample_fps: source fps must be positive, got ",
             src_fps);
  HV_REQUIRE(target_fps > 0.0, "resample_fps: target fps must be positive, got ",
             target_fps);
  const double ratio = src_fps / target_fps;
  std::vector<int64_t> indices;
  for (int64_t k = 0;; ++k) {
    const auto idx = static_cast<int64_t>(
        std::floor(static_cast<double>(k) * ratio + 0.5));
    if (idx >= n_frames) break;
    indices.push_back(idx);
  }
  return indices;
}

Clip resample_fps(const Clip& clip, double target_fps) {
  HV_REQUIRE(clip.frames.t >= 1, "resample_fps: empty clip");
  const auto indices = resample_indices(clip.frames.t, clip.fps, target_fps);
  Clip out;
  out.fps = target_fps;
  out.frames.t = static_cast<int64_t>(indices.size());
  out.frames.h = clip.frames.h;
  out.frames.w = clip.frames.w;
  out.frames.c = clip.frames.c;
  out.frames.data.resize(static_cast<size_t>(out.frames.t) * clip.frames.frame_bytes());
  for (size_t k = 0; k < indices.size(); ++k)
    std::copy_n(clip.frames.frame(indices[k]), clip.frames.frame_bytes(),
                out.frames.frame(static_cast<int64_t>(k)));
  return out;
}

Clip select_window(const Clip& clip, PipelineMode mode, uint64_t sample_seed,
                   int64_t length) {
  const int64_t t = clip.frames.t;
  HV_REQUIRE(t >= 1, "select_window: empty clip");
  Clip out;
  out.fps = clip.fps;
  out.frames.h = clip.frames.h;
  out.frames.w = clip.frames.w;
  out.frames.c = clip.frames.c;
  out.frames.t = length;
  out.frames.data.resize(static_cast<size_t>(length) * clip.frames.frame_bytes());

  if (t >= length) {
    int64_t start;
    if (mode == PipelineMode::train) {
      Rng rng(derive_seed(sample_seed, "window"));
      start = rng.uniform_int(t - length + 1);
    } else {
      start = (t - length) / 2;
    }
    std::copy_n(clip.frames.frame(start),
                static_cast<size_t>(length) * clip.frames.frame_bytes(),
                out.frames.frame(0));
    return out;
  }

  // replicate first and last frames, extra copy to the front
  const int64_t deficit = length - t;
  const int64_t front = (deficit + 1) / 2;
  for (int64_t i = 0; i < length; ++i) {
    const int64_t src = std::clamp<int64_t>(i - front, 0, t - 1);
    std::copy_n(clip.frames.frame(src), clip.frames.frame_bytes(),
                out.frames.frame(i));
  }
  return out;
}

Clip resize_bilinear(const Clip& clip, int64_t out_h, int64_t out_w) {
  const int64_t h = clip.frames.h, w = clip.frames.w, c = clip.frames.c;
  Clip out;
  out.fps = clip.fps;
  out.frames.t = clip.frames.t;
  out.frames.h = out_h;
  out.frames.w = out_w;
  out.frames.c = c;
  out.frames.data.resize(
      static_cast<size_t>(clip.frames.t) * out_h * out_w * c);

  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);

  // per-axis taps are identical for every frame; precompute them
  struct Tap {
    int64_t i0, i1;
    double f;
  };
  auto make_taps = [](int64_t out_n, int64_t in_n, double scale) {
    std::vector<Tap> taps(static_cast<size_t>(out_n));
    for (int64_t i = 0; i < out_n; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      auto i0 = static_cast<int64_t>(std::floor(src));
      if (i0 > in_n - 1) i0 = in_n - 1;
      const int64_t i1 = std::min(i0 + 1, in_n - 1);
      taps[static_cast<size_t>(i)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
  };
  const auto ytaps = make_taps(out_h, h, sy);
  const auto xtaps = make_taps(out_w, w, sx);

  for (int64_t t = 0; t < clip.frames.t; ++t) {
    const uint8_t* src = clip.frames.frame(t);
    uint8_t* dst = out.frames.frame(t);
    for (int64_t y = 0; y < out_h; ++y) {
      const Tap& ty = ytaps[static_cast<size_t>(y)];
      for (int64_t x = 0; x < out_w; ++x) {
        const Tap& tx = xtaps[static_cast<size_t>(x)];
        for (int64_t ch = 0; ch < c; ++ch) {
          const double v00 = src[(ty.i0 * w + tx.i0) * c + ch];
          const double v01 = src[(ty.i0 * w + tx.i1) * c + ch];
          const double v10 = src[(ty.i1 * w + tx.i0) * c + ch];
          const double v11 = src[(ty.i1 * w + tx.i1) * c + ch];
          const double v = (1.0 - ty.f) * ((1.0 - tx.f) * v00 + tx.f * v01) +
                           ty.f * ((1.0 - tx.f) * v10 + tx.f * v11);
          const double rounded = std::floor(v + 0.5);  // round half up
          dst[(y * out_w + x) * c + ch] =
              static_cast<uint8_t>(std::clamp(rounded, 0.0, 255.0));
        }
      }
    }
  }
  return out;
}

Clip crop(const Clip& clip, PipelineMode mode, uint64_t sample_seed,
          int64_t size) {
  const int64_t h = clip.frames.h, w = clip.frames.w, c = clip.frames.c;
  HV_REQUIRE(h >= size && w >= size, "crop: frame ", h, "x", w,
             " is smaller than the ", size, "x", size, " crop");
  int64_t oy, ox;
  if (mode == PipelineMode::train) {
    Rng rng(derive_seed(sample_seed, "crop"));
    oy = rng.uniform_int(h - size + 1);
    ox = rng.uniform_int(w - size + 1);
  } else {
    oy = (h - size) / 2;
    ox = (w - size) / 2;
  }
  Clip out;
  out.fps = clip.fps;
  out.frames.t = clip.frames.t;
  out.frames.h = size;
  out.frames.w = size;
  out.frames.c = c;
  out.frames.data.resize(static_cast<size_t>(clip.frames.t) * size * size * c);
  for (int64_t t = 0; t < clip.frames.t; ++t) {
    const uint8_t* src = clip.frames.frame(t);
    uint8_t* dst = out.frames.frame(t);
    for (int64_t y = 0; y < size; ++y)
      std::copy_n(src + ((oy + y) * w + ox) * c, static_cast<size_t>(size) * c,
                  dst + y * size * c);
  }
  return out;
}

void normalize_into(const Clip& clip, float* out) {
  const int64_t t = clip.frames.t, h = clip.frames.h, w = clip.frames.w,
                c = clip.frames.c;
  const uint8_t* src = clip.frames.data.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ti = 0; ti < t; ++ti)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          out[((ch * t + ti) * h + y) * w + x] = static_cast<float>(
              static_cast<double>(src[((ti * h + y) * w + x) * c + ch]) /
                  255.0 * 2.0 -
              1.0);
}

Tensor<float> normalize(const Clip& clip) {
  Tensor<float> out = Tensor<float>::zeros(
      Shape{clip.frames.c, clip.frames.t, clip.frames.h, clip.frames.w});
  normalize_into(clip, out.data());
  return out;
}

int64_t Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int64_t id) const {
  HV_REQUIRE(id >= 0 && id < size(), "Vocabulary: id ", id,
             " out of range [0,", size(), ")");
  return id_to_token[static_cast<size_t>(id)];
}

namespace {

std::vector<std::string> split_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

Vocabulary build_vocab(const std::vector<ManifestEntry>& train_manifest) {
  Vocabulary v;
  v.id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int64_t>(i);
  for (const auto& entry : train_manifest)
    for (const auto& token : split_lower(entry.caption))
      if (!v.token_to_id.count(token)) {
        v.token_to_id[token] = v.size();
        v.id_to_token.push_back(token);
      }
  return v;
}

std::vector<int64_t> tokenize(const std::string& caption,
                              const Vocabulary& vocab) {
  std::vector<int64_t> ids;
  ids.push_back(Vocabulary::kBos);
  for (const auto& token : split_lower(caption)) ids.push_back(vocab.id_of(token));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string detokenize(const std::vector<int64_t>& ids, const Vocabulary& vocab) {
  std::string text;
  for (int64_t id : ids) {
    if (id == Vocabulary::kBos || id == Vocabulary::kEos ||
        id == Vocabulary::kPad)
      continue;
    if (!text.empty()) text += " ";
    text += vocab.token_of(id);
  }
  return text;
}

uint64_t sample_pipeline_seed(uint64_t global_seed, const std::string& id,
                              uint64_t epoch) {
  return global_seed ^ hash_str(id) ^ epoch;
}

Tensor<float> preprocess_clip(const Clip& clip, PipelineMode mode,
                              uint64_t sample_seed) {
  const Clip resampled = resample_fps(clip);
  const Clip window = select_window(resampled, mode, sample_seed);
  const Clip resized = resize_bilinear(window);
  const Clip cropped = crop(resized, mode, sample_seed);
  return normalize(cropped);
}

Batch collate(const std::vector<ManifestEntry>& samples,
              const std::string& data_root, const Vocabulary& vocab,
              PipelineMode mode, uint64_t global_seed, uint64_t epoch) {
  HV_REQUIRE(!samples.empty(), "collate: empty batch");
  const auto b = static_cast<int64_t>(samples.size());
  Batch batch;
  batch.size = b;
  batch.video = Tensor<float>::zeros(Shape{b, 3, kWindowFrames, kCropTo, kCropTo});
  batch.group.resize(static_cast<size_t>(b));
  batch.category.resize(static_cast<size_t>(b));

  std::vector<std::vector<int64_t>> captions(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    captions[static_cast<size_t>(i)] = tokenize(samples[static_cast<size_t>(i)].caption, vocab);
    batch.max_len = std::max(
        batch.max_len, static_cast<int64_t>(captions[static_cast<size_t>(i)].size()));
    batch.group[static_cast<size_t>(i)] = samples[static_cast<size_t>(i)].group;
    batch.category[static_cast<size_t>(i)] = samples[static_cast<size_t>(i)].category;
  }
  batch.caption_ids.assign(static_cast<size_t>(b * batch.max_len), Vocabulary::kPad);
  batch.caption_len.resize(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    const auto& ids = captions[static_cast<size_t>(i)];
    std::copy(ids.begin(), ids.end(),
              batch.caption_ids.begin() + i * batch.max_len);
    batch.caption_len[static_cast<size_t>(i)] = static_cast<int64_t>(ids.size());
  }

  const int64_t stride = 3 * kWindowFrames * kCropTo * kCropTo;
  std::string failure;
  std::mutex failure_mu;
  float* video = batch.video.data();
  parallel_for(b, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const ManifestEntry& entry = samples[static_cast<size_t>(i)];
      try {
        Clip clip;
        clip.frames = read_clip(
            (std::filesystem::path(data_root) / entry.frames).string());
        clip.fps = entry.fps;
        const uint64_t seed = sample_pipeline_seed(global_seed, entry.id, epoch);
        const Clip resampled = resample_fps(clip);
        const Clip window = select_window(resampled, mode, seed);
        const Clip resized = resize_bilinear(window);
        const Clip cropped = crop(resized, mode, seed);
        normalize_into(cropped, video + i * stride);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (failure.empty())
          failure = str_cat("collate: sample '", entry.id, "': ", e.what());
      }
    }
  });
  HV_REQUIRE(failure.empty(), failure);
  return batch;
}

}  // namespace hiervid
