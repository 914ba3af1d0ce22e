#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiervid/adam.hpp"
#include "hiervid/model.hpp"

namespace hiervid {

struct TensorRecord {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> values;
};

// HVCK checkpoint: magic "HVCK", u32 version, u32 param count, then per
// parameter u16 name length, name bytes, u8 rank, u32 dims, f32 LE values;
// optimizer moments follow in the same layout (adam.m.* / adam.v.*), then
// the adam step count, the run's rng seed, and the stage/epoch/step
// counters. Streams re-derive from the seed, so the seed IS the rng state.
struct CheckpointState {
  uint32_t version = 1;
  std::vector<TensorRecord> params;
  std::vector<TensorRecord> moments;
  int64_t adam_step = 0;
  uint64_t rng_seed = 0;
  uint32_t stage = 0;
  uint32_t epoch_in_stage = 0;
  uint64_t global_epoch = 0;
  uint64_t global_step = 0;
};

void save_checkpoint(const CheckpointState& state, const std::string& path);
CheckpointState load_checkpoint(const std::string& path);

CheckpointState snapshot_training(const Model<float>& model,
                                  const Adam<float>& opt, uint64_t rng_seed,
                                  uint32_t stage, uint32_t epoch_in_stage,
                                  uint64_t global_epoch, uint64_t global_step);

// Restores parameters and moments; rejects unknown parameter names and
// names the first mismatched shape.
void restore_training(const CheckpointState& state, Model<float>& model,
                      Adam<float>& opt);

}  // namespace hiervid
