#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiervid/clip_io.hpp"
#include "hiervid/manifest.hpp"
#include "hiervid/taxonomy.hpp"

namespace hiervid {

struct SyntheticSpec {
  int canvas = 160;      // square frames, pre-pipeline
  int frames_min = 24;   // clip length drawn uniformly from [min, max]
  int frames_max = 72;
  double fps = 12.0;
  uint64_t seed = 0;
};

enum class ShapeKind { circle, square, triangle };

struct FrameGeom {
  double cx = 0.0, cy = 0.0, half = 0.0;
  bool fully_inside = false;
  bool fully_outside = false;
  double bbox_area() const { return 4.0 * half * half; }
};

// One rendered sample plus its per-frame geometry records (the renderer's
// own ground truth, used by tests instead of re-deriving motion from pixels).
struct RenderedClip {
  std::string id;
  RawClip clip;
  int group_id = 0;
  int category_id = 0;
  std::string caption;
  std::vector<FrameGeom> geometry;
};

struct DrawnLabels {
  int category;
  ShapeKind shape;
  int color;
};

// Uniform (category, shape, color) draw from a sample's base seed
// (spec.seed ^ hash(sample id)); generate_corpus uses exactly this.
DrawnLabels sample_labels(const Taxonomy& tax, uint64_t sample_base);

// Renders one solid shape on black following the category's motion
// archetype. Deterministic in (spec, category, shape, color, seed); the
// start position, speed, and size carry the randomness.
RenderedClip render_clip(const SyntheticSpec& spec, const Taxonomy& tax,
                         int category_id, ShapeKind shape, int color_index,
                         uint64_t seed);

struct CorpusCounts {
  int64_t train = 0, val = 0, test = 0;
};

struct CorpusSummary {
  std::vector<ManifestEntry> train, val, test;
};

// Samples categories and objects uniformly, renders clips in parallel with
// per-sample seeds, writes frames/ plus train/val/test JSONL manifests and
// taxonomy.json under out_dir.
CorpusSummary generate_corpus(const SyntheticSpec& spec, const Taxonomy& tax,
                              const CorpusCounts& counts,
                              const std::string& out_dir);

}  // namespace hiervid
