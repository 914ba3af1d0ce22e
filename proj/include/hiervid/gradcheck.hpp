#pragma once

#include <string>
#include <vector>

namespace hiervid::gradcheck {

struct OpReport {
  std::string op;
  double max_rel_err = 0.0;
  int64_t comparisons = 0;
  double seconds = 0.0;
};

inline constexpr double kTolerance = 1e-4;
inline constexpr double kStep = 1e-5;

// |a - b| / max(|a|, |b|, 1e-3): relative where gradients are O(1) or
// larger, absolute-with-floor where both are tiny.
double rel_err(double a, double b);

std::vector<std::string> op_names();

// Central finite differences (64-bit, h = 1e-5) against the tape gradients,
// `seeds` random instances per op. Measurements within 1e-3 of a relu kink
// or a pooling tie are excluded.
OpReport check_op(const std::string& name, int seeds);

// Whole-model joint loss vs finite differences on randomly chosen parameter
// elements, and the two-layer teacher-forced decoder chain.
OpReport check_full_model(int seeds);
OpReport check_caption_decoder(int seeds);

std::vector<OpReport> run_all(int seeds = 10);

bool all_pass(const std::vector<OpReport>& reports, double tol = kTolerance);

}  // namespace hiervid::gradcheck
