#pragma once

#include <string>
#include <vector>

#include "hiervid/trainer.hpp"

namespace hiervid {

struct AblationRow {
  std::string label;  // e.g. "W=[1,1,0]"
  bool sup_group = false, sup_category = false, sup_caption = false;
  std::vector<MetricsRow> per_seed;  // test-split metrics, one per seed

  double mean(double MetricsRow::*field) const;
  double stddev(double MetricsRow::*field) const;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // the five weight vectors, paper order
  bool fine_direction_holds = false;    // fine([1,1,0]) >= fine([0,1,0])
  bool coarse_direction_holds = false;  // coarse([1,1,1]) >= coarse([1,0,0])
  std::string csv;
  std::string table;
};

// Five training configurations: the single-level baselines [0,1,0] and
// [0,0,1], plus one staged run [1,0,0] -> [1,1,0] -> [1,1,1] whose stage-end
// checkpoints supply the remaining three rows. Each row runs n_seeds times
// with independently derived seeds; the table reports mean +/- std of the
// test metrics. Unsupervised levels are measured anyway and annotated.
AblationReport ablate(const ModelSettings& settings, const DataSource& data,
                      const TrainConfig& base, int n_seeds,
                      const std::string& out_dir);

}  // namespace hiervid
