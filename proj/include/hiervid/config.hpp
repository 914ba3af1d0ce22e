#pragma once

#include <string>

#include "hiervid/synth.hpp"
#include "hiervid/trainer.hpp"

namespace hiervid {

// One document drives every subcommand; flags override file values and the
// resolved result (all defaults filled in) is dumped next to run artifacts.
// Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 7;

  SyntheticSpec data;  // canvas, frames_min/max, fps (seed filled at resolve)
  int64_t n_train = 2000, n_val = 500, n_test = 500;

  ModelSettings model;
  TrainConfig train;

  std::string data_dir = "data";
  std::string out_dir = "runs/default";

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string to_json() const;

  // pushes the top-level seed into the sub-configs and validates
  void resolve();
};

// "0.5,1,2" -> LossWeights
LossWeights parse_weights(const std::string& text);
// "1,0,0;1,1,0;1,1,1" -> stage list
std::vector<LossWeights> parse_stages(const std::string& text);

Pointwise parse_activation(const std::string& name);
const char* activation_name(Pointwise kind);

}  // namespace hiervid
