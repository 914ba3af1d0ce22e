#include "hiervid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>

#include "hiervid/check.hpp"
#include "hiervid/rng.hpp"
#include "hiervid/threading.hpp"

namespace hiervid {

namespace {

struct Rgb {
  uint8_t r, g, b;
};

// matches color_names(): red, green, blue, yellow
constexpr Rgb kPalette[4] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}};

struct MotionPlan {
  double cx0, cy0, cx1, cy1;  // centroid endpoints
  double s0, s1;              // half-extent endpoints
};

constexpr double kMargin = 3.0;
constexpr double kMinSlide = 25.0;

// Endpoint layout per category; positions interpolate linearly over frames.
MotionPlan plan_motion(const SyntheticSpec& spec, int category, Rng& rng) {
  const double edge = static_cast<double>(spec.canvas - 1);
  const double s = rng.uniform(10.0, 20.0);
  const double lo = s + kMargin, hi = edge - s - kMargin;
  const double mid_x = rng.uniform(lo, hi);
  const double mid_y = rng.uniform(lo, hi);
  const double outside_low = -(s + kMargin + rng.uniform(0.0, 8.0));
  const double outside_high = edge + s + kMargin + rng.uniform(0.0, 8.0);

  MotionPlan p{mid_x, mid_y, mid_x, mid_y, s, s};
  switch (category) {
    case 0:  // enter-left
      p.cx0 = outside_low;
      p.cx1 = rng.uniform(lo, hi);
      break;
    case 1:  // enter-right
      p.cx0 = outside_high;
      p.cx1 = rng.uniform(lo, hi);
      break;
    case 2:  // enter-top
      p.cy0 = outside_low;
      p.cy1 = rng.uniform(lo, hi);
      break;
    case 3:  // enter-bottom
      p.cy0 = outside_high;
      p.cy1 = rng.uniform(lo, hi);
      break;
    case 4:  // leave-left
      p.cx0 = rng.uniform(lo, hi);
      p.cx1 = outside_low;
      break;
    case 5:  // leave-right
      p.cx0 = rng.uniform(lo, hi);
      p.cx1 = outside_high;
      break;
    case 6:  // leave-top
      p.cy0 = rng.uniform(lo, hi);
      p.cy1 = outside_low;
      break;
    case 7:  // leave-bottom
      p.cy0 = rng.uniform(lo, hi);
      p.cy1 = outside_high;
      break;
    case 8:  // slide-left
      p.cx0 = rng.uniform(lo + kMinSlide, hi);
      p.cx1 = rng.uniform(lo, p.cx0 - kMinSlide);
      break;
    case 9:  // slide-right
      p.cx0 = rng.uniform(lo, hi - kMinSlide);
      p.cx1 = rng.uniform(p.cx0 + kMinSlide, hi);
      break;
    case 10:  // slide-up
      p.cy0 = rng.uniform(lo + kMinSlide, hi);
      p.cy1 = rng.uniform(lo, p.cy0 - kMinSlide);
      break;
    case 11:  // slide-down
      p.cy0 = rng.uniform(lo, hi - kMinSlide);
      p.cy1 = rng.uniform(p.cy0 + kMinSlide, hi);
      break;
    case 12: {  // pulse-grow
      p.s0 = rng.uniform(8.0, 12.0);
      p.s1 = p.s0 + rng.uniform(6.0, 10.0);
      const double lo1 = p.s1 + kMargin, hi1 = edge - p.s1 - kMargin;
      p.cx0 = p.cx1 = rng.uniform(lo1, hi1);
      p.cy0 = p.cy1 = rng.uniform(lo1, hi1);
      break;
    }
    case 13: {  // pulse-shrink
      p.s0 = rng.uniform(14.0, 22.0);
      p.s1 = rng.uniform(6.0, p.s0 - 6.0);
      const double lo1 = p.s0 + kMargin, hi1 = edge - p.s0 - kMargin;
      p.cx0 = p.cx1 = rng.uniform(lo1, hi1);
      p.cy0 = p.cy1 = rng.uniform(lo1, hi1);
      break;
    }
    default:
      HV_REQUIRE(false, "render_clip: category ", category, " out of range");
  }
  return p;
}

bool inside_shape(ShapeKind kind, double px, double py, double cx, double cy,
                  double s) {
  const double dx = px - cx, dy = py - cy;
  switch (kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= s * s;
    case ShapeKind::square:
      return std::abs(dx) <= s && std::abs(dy) <= s;
    case ShapeKind::triangle: {
      // apex up: (cx, cy-s), (cx-s, cy+s), (cx+s, cy+s)
      if (dy < -s || dy > s) return false;
      // at height dy the half-width grows linearly from 0 at the apex
      const double halfw = s * (dy + s) / (2.0 * s);
      return std::abs(dx) <= halfw;
    }
  }
  return false;
}

void rasterize(uint8_t* frame, int canvas, ShapeKind kind, Rgb color,
               double cx, double cy, double s) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - s - 1)));
  const int y1 = std::min(canvas - 1, static_cast<int>(std::ceil(cy + s + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - s - 1)));
  const int x1 = std::min(canvas - 1, static_cast<int>(std::ceil(cx + s + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside_shape(kind, x + 0.5, y + 0.5, cx, cy, s)) {
        uint8_t* px = frame + (y * canvas + x) * 3;
        px[0] = color.r;
        px[1] = color.g;
        px[2] = color.b;
      }
}

}  // namespace

DrawnLabels sample_labels(const Taxonomy& tax, uint64_t sample_base) {
  Rng rng(derive_seed(sample_base, "labels"));
  DrawnLabels labels;
  labels.category = static_cast<int>(rng.uniform_int(tax.n_categories()));
  labels.shape = static_cast<ShapeKind>(rng.uniform_int(3));
  labels.color = static_cast<int>(rng.uniform_int(4));
  return labels;
}

RenderedClip render_clip(const SyntheticSpec& spec, const Taxonomy& tax,
                         int category_id, ShapeKind shape, int color_index,
                         uint64_t seed) {
  HV_REQUIRE(category_id >= 0 && category_id < tax.n_categories(),
             "render_clip: category ", category_id, " out of range [0,",
             tax.n_categories(), ")");
  HV_REQUIRE(color_index >= 0 && color_index < 4, "render_clip: color index ",
             color_index, " out of range [0,4)");
  HV_REQUIRE(spec.frames_min >= 2, "render_clip: need >= 2 frames, got min ",
             spec.frames_min);
  HV_REQUIRE(spec.frames_max >= spec.frames_min,
             "render_clip: frames_max ", spec.frames_max, " < frames_min ",
             spec.frames_min);

  Rng rng(seed);
  const int frames =
      spec.frames_min +
      static_cast<int>(rng.uniform_int(spec.frames_max - spec.frames_min + 1));
  const MotionPlan plan = plan_motion(spec, category_id, rng);

  RenderedClip out;
  out.category_id = category_id;
  out.group_id = tax.parent(category_id);
  out.caption = color_names()[static_cast<size_t>(color_index)] + " " +
                shape_names()[static_cast<size_t>(static_cast<int>(shape))] +
                " " + motion_phrase(category_id);
  out.clip.t = frames;
  out.clip.h = spec.canvas;
  out.clip.w = spec.canvas;
  out.clip.c = 3;
  out.clip.data.assign(static_cast<size_t>(frames) * spec.canvas * spec.canvas * 3,
                       0);
  out.geometry.resize(static_cast<size_t>(frames));

  const double edge = static_cast<double>(spec.canvas - 1);
  for (int f = 0; f < frames; ++f) {
    const double a = static_cast<double>(f) / static_cast<double>(frames - 1);
    FrameGeom& g = out.geometry[static_cast<size_t>(f)];
    g.cx = plan.cx0 + (plan.cx1 - plan.cx0) * a;
    g.cy = plan.cy0 + (plan.cy1 - plan.cy0) * a;
    g.half = plan.s0 + (plan.s1 - plan.s0) * a;
    g.fully_inside = g.cx - g.half >= 0.0 && g.cx + g.half <= edge &&
                     g.cy - g.half >= 0.0 && g.cy + g.half <= edge;
    g.fully_outside = g.cx + g.half < 0.0 || g.cx - g.half > edge ||
                      g.cy + g.half < 0.0 || g.cy - g.half > edge;
    rasterize(out.clip.frame(f), spec.canvas, shape,
              kPalette[static_cast<size_t>(color_index)], g.cx, g.cy, g.half);
  }
  return out;
}

CorpusSummary generate_corpus(const SyntheticSpec& spec, const Taxonomy& tax,
                              const CorpusCounts& counts,
                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  HV_REQUIRE(counts.train >= 1 && counts.val >= 1 && counts.test >= 1,
             "generate_corpus: all split counts must be >= 1, got train=",
             counts.train, " val=", counts.val, " test=", counts.test);
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "frames", ec);
  HV_REQUIRE(!ec, "generate_corpus: cannot create '", out_dir,
             "/frames': ", ec.message());

  CorpusSummary summary;
  const struct {
    const char* name;
    int64_t count;
    std::vector<ManifestEntry>* entries;
  } splits[3] = {{"train", counts.train, &summary.train},
                 {"val", counts.val, &summary.val},
                 {"test", counts.test, &summary.test}};

  for (const auto& split : splits) {
    split.entries->resize(static_cast<size_t>(split.count));
    std::string failure;
    std::mutex failure_mu;
    parallel_for(split.count, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s-%06lld", split.name,
                      static_cast<long long>(i));
        const std::string id(buf);
        const uint64_t base = spec.seed ^ hash_str(id);
        const DrawnLabels labels = sample_labels(tax, base);
        RenderedClip rc =
            render_clip(spec, tax, labels.category, labels.shape, labels.color,
                        derive_seed(base, "render"));
        const std::string rel = std::string("frames/") + id + ".hvc";
        try {
          write_hvc1((fs::path(out_dir) / rel).string(), rc.clip);
        } catch (const Error& e) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (failure.empty()) failure = e.what();
          continue;
        }
        ManifestEntry e;
        e.id = id;
        e.frames = rel;
        e.n_frames = rc.clip.t;
        e.fps = spec.fps;
        e.group = rc.group_id;
        e.category = rc.category_id;
        e.caption = rc.caption;
        (*split.entries)[static_cast<size_t>(i)] = std::move(e);
      }
    });
    HV_REQUIRE(failure.empty(), failure);
    write_manifest((fs::path(out_dir) / (std::string(split.name) + ".jsonl")).string(),
                   *split.entries);
  }
  tax.save((fs::path(out_dir) / "taxonomy.json").string());
  return summary;
}

}  // namespace hiervid
