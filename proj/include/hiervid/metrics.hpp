#pragma once

#include <string>
#include <vector>

#include "hiervid/heads.hpp"
#include "hiervid/tensor.hpp"

namespace hiervid {

// 1 iff the sequences are identical word by word after stripping the
// structural specials (<pad>, <bos>, <eos>).
int exact_match(const std::vector<int64_t>& pred, const std::vector<int64_t>& ref);

// Fraction of rows whose argmax equals the target; ties break to the lowest
// index.
double top1_accuracy(const Tensor<float>& probs, const std::vector<int64_t>& targets);

struct MetricsRow {
  int stage = 0;
  int epoch = 0;
  std::string split;
  double acc_group = 0.0;
  double acc_category = 0.0;
  double caption_exact = 0.0;
  LossBreakdown losses;
};

// stage,epoch,split,acc_group,acc_category,caption_exact,loss_group,
// loss_category,loss_caption,total
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace hiervid
