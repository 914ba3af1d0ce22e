#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hiervid/adam.hpp"
#include "hiervid/checkpoint.hpp"
#include "hiervid/dataset.hpp"
#include "hiervid/metrics.hpp"
#include "hiervid/model.hpp"

namespace hiervid {

struct ModelSettings {
  EncoderConfig encoder;
  int64_t embed_dim = 32;
  int64_t decoder_hidden = 128;
  int64_t max_decode_len = 12;
};

Model<float> build_model(const ModelSettings& settings, const DataSource& data);

struct TrainConfig {
  double lr = 1e-3;
  int64_t batch_size = 16;
  int64_t epochs_per_stage = 20;
  std::vector<LossWeights> stages = {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}};
  uint64_t seed = 0;
  bool reset_optimizer_between_stages = false;
  bool deterministic = true;
  int64_t max_steps = 0;  // 0 = unlimited

  void validate() const {
    HV_REQUIRE(lr > 0.0, "TrainConfig: lr must be positive, got ", lr);
    HV_REQUIRE(batch_size >= 1, "TrainConfig: batch_size must be >= 1, got ",
               batch_size);
    HV_REQUIRE(epochs_per_stage >= 1,
               "TrainConfig: epochs_per_stage must be >= 1, got ",
               epochs_per_stage);
    HV_REQUIRE(!stages.empty(), "TrainConfig: stages must be nonempty");
    for (const auto& w : stages) w.validate();
  }
};

struct TrainResult {
  std::vector<MetricsRow> metrics;       // per-epoch val rows + stage-end test rows
  std::vector<double> loss_trajectory;   // per-step totals, in step order
  bool aborted_non_finite = false;
  int64_t steps = 0;
  std::string last_checkpoint;           // most recent persisted state, if any
};

// Optimization loop with the staged loss-activation schedule. Shuffle order
// derives from (seed, global_epoch) and augmentation from
// (seed, sample id, global_epoch), so a resumed run replays the exact
// trajectory.
class Trainer {
 public:
  Trainer(Model<float>& model, const DataSource& data, TrainConfig cfg);

  TrainResult run(const std::string& out_dir = "");
  TrainResult resume(const CheckpointState& state, const std::string& out_dir = "");

  // one optimizer step over explicit samples; returns the total loss
  double train_step(const std::vector<ManifestEntry>& batch,
                    const LossWeights& weights, uint64_t epoch_for_streams);

  MetricsRow evaluate(const std::string& split, const LossWeights& weights,
                      int stage, int epoch);

  CheckpointState snapshot(uint32_t stage, uint32_t epoch_in_stage) const;

  Adam<float>& optimizer() { return opt_; }
  int64_t global_step() const { return global_step_; }

 private:
  TrainResult run_loop(uint32_t start_stage, uint32_t start_epoch,
                       const std::string& out_dir);

  Model<float>& model_;
  const DataSource& data_;
  TrainConfig cfg_;
  Adam<float> opt_;
  uint64_t global_epoch_ = 0;
  int64_t global_step_ = 0;
};

// evaluate() for a stored checkpoint: rebuilds the model, restores, runs the
// eval-mode pipeline over the split.
MetricsRow evaluate_checkpoint(const std::string& checkpoint_path,
                               const ModelSettings& settings,
                               const DataSource& data, const std::string& split,
                               const LossWeights& weights);

}  // namespace hiervid
