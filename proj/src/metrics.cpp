#include "hiervid/metrics.hpp"

#include <cstdio>

#include "hiervid/pipeline.hpp"

namespace hiervid {

namespace {

std::vector<int64_t> strip_specials(const std::vector<int64_t>& tokens) {
  std::vector<int64_t> out;
  for (int64_t t : tokens)
    if (t != Vocabulary::kPad && t != Vocabulary::kBos && t != Vocabulary::kEos)
      out.push_back(t);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

int exact_match(const std::vector<int64_t>& pred, const std::vector<int64_t>& ref) {
  return strip_specials(pred) == strip_specials(ref) ? 1 : 0;
}

double top1_accuracy(const Tensor<float>& probs,
                     const std::vector<int64_t>& targets) {
  HV_REQUIRE(probs.shape().rank() == 2, "top1_accuracy: probs must be rank 2, got ",
             probs.shape().to_string());
  const int64_t b = probs.shape()[0], k = probs.shape()[1];
  HV_REQUIRE(static_cast<int64_t>(targets.size()) == b,
             "top1_accuracy: got ", targets.size(), " targets for batch ", b);
  int64_t correct = 0;
  for (int64_t r = 0; r < b; ++r) {
    const float* row = probs.data() + r * k;
    int64_t best = 0;
    for (int64_t c = 1; c < k; ++c)
      if (row[c] > row[best]) best = c;
    if (best == targets[static_cast<size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(b);
}

std::string metrics_csv_header() {
  return "stage,epoch,split,acc_group,acc_category,caption_exact,"
         "loss_group,loss_category,loss_caption,total";
}

std::string metrics_csv_row(const MetricsRow& row) {
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("");
  };
  return str_cat(row.stage, ",", row.epoch, ",", row.split, ",",
                 format_double(row.acc_group), ",",
                 format_double(row.acc_category), ",",
                 format_double(row.caption_exact), ",", opt(row.losses.loss_group),
                 ",", opt(row.losses.loss_category), ",",
                 opt(row.losses.loss_caption), ",",
                 format_double(row.losses.total));
}

}  // namespace hiervid
