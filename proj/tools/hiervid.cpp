#include <CLI11.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hiervid/ablate.hpp"
#include "hiervid/config.hpp"
#include "hiervid/gradcheck.hpp"
#include "hiervid/synth.hpp"
#include "hiervid/trainer.hpp"

namespace fs = std::filesystem;
using namespace hiervid;

namespace {

// One command per output directory at a time.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) {
    fs::create_directories(dir);
    path_ = (fs::path(dir) / ".lock").string();
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    HV_REQUIRE(fd_ >= 0, "output directory '", dir,
               "' is locked by another hiervid command (remove ", path_,
               " if that run is gone)");
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

void dump_resolved_config(const RunConfig& cfg, const std::string& dir) {
  std::ofstream out(fs::path(dir) / "resolved_config.json");
  out << cfg.to_json() << "\n";
}

std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig load_config(const CommonFlags& common) {
  RunConfig cfg = common.config_path.empty()
                      ? RunConfig{}
                      : RunConfig::load(common.config_path);
  if (common.seed_set) cfg.seed = common.seed;
  cfg.resolve();
  return cfg;
}

int cmd_gen_data(const CommonFlags& common, const std::string& out_dir,
                 int64_t n_train, int64_t n_val, int64_t n_test) {
  RunConfig cfg = load_config(common);
  if (n_train > 0) cfg.n_train = n_train;
  if (n_val > 0) cfg.n_val = n_val;
  if (n_test > 0) cfg.n_test = n_test;
  cfg.data_dir = out_dir;
  cfg.resolve();

  DirLock lock(out_dir);
  Taxonomy tax = build_taxonomy();
  CorpusSummary summary = generate_corpus(
      cfg.data, tax, CorpusCounts{cfg.n_train, cfg.n_val, cfg.n_test}, out_dir);
  dump_resolved_config(cfg, out_dir);
  std::cout << "wrote " << summary.train.size() << " train, "
            << summary.val.size() << " val, " << summary.test.size()
            << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonFlags& common, const std::string& data_dir,
              const std::string& out_dir, const std::string& stages,
              const std::string& weights, int64_t epochs_per_stage,
              const std::string& resume_path) {
  RunConfig cfg = load_config(common);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  HV_REQUIRE(stages.empty() || weights.empty(),
             "train: --stages and --weights are mutually exclusive");
  if (!stages.empty()) cfg.train.stages = parse_stages(stages);
  if (!weights.empty()) cfg.train.stages = {parse_weights(weights)};
  if (epochs_per_stage > 0) cfg.train.epochs_per_stage = epochs_per_stage;
  cfg.resolve();

  DirLock lock(cfg.out_dir);
  dump_resolved_config(cfg, cfg.out_dir);
  DataSource data = DataSource::load(cfg.data_dir);
  Model<float> model = build_model(cfg.model, data);
  model.init_params(cfg.seed);
  Trainer trainer(model, data, cfg.train);

  TrainResult result;
  if (resume_path.empty()) {
    result = trainer.run(cfg.out_dir);
  } else {
    result = trainer.resume(load_checkpoint(resume_path), cfg.out_dir);
  }
  for (const auto& row : result.metrics)
    std::cout << metrics_csv_row(row) << "\n";
  if (result.aborted_non_finite) {
    std::cerr << "training aborted on a non-finite loss; last good checkpoint: "
              << result.last_checkpoint << "\n";
    return 1;
  }
  std::cout << "finished " << result.steps << " steps; artifacts in "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& checkpoint,
             const std::string& data_dir, const std::string& split,
             const std::string& weights, const std::string& out_csv) {
  RunConfig cfg = load_config(common);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  LossWeights w = weights.empty() ? LossWeights{1, 1, 1} : parse_weights(weights);
  DataSource data = DataSource::load(cfg.data_dir);
  MetricsRow row = evaluate_checkpoint(checkpoint, cfg.model, data, split, w);
  std::cout << "coarse-grained accuracy: " << pct(row.acc_group) << "\n"
            << "fine-grained accuracy:   " << pct(row.acc_category) << "\n"
            << "captioning accuracy:     " << pct(row.caption_exact) << "\n";
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    out << metrics_csv_header() << "\n" << metrics_csv_row(row) << "\n";
    const fs::path dir = fs::path(out_csv).parent_path();
    dump_resolved_config(cfg, dir.empty() ? "." : dir.string());
  }
  return 0;
}

int cmd_ablate(const CommonFlags& common, const std::string& data_dir,
               const std::string& out_dir, int n_seeds,
               int64_t epochs_per_stage) {
  RunConfig cfg = load_config(common);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (epochs_per_stage > 0) cfg.train.epochs_per_stage = epochs_per_stage;
  cfg.resolve();

  DirLock lock(cfg.out_dir);
  dump_resolved_config(cfg, cfg.out_dir);
  DataSource data = DataSource::load(cfg.data_dir);
  AblationReport report = ablate(cfg.model, data, cfg.train, n_seeds, cfg.out_dir);
  std::cout << report.table;
  return 0;
}

int cmd_grad_check(const std::string& op, int seeds) {
  std::vector<gradcheck::OpReport> reports;
  if (op.empty()) {
    reports = gradcheck::run_all(seeds);
  } else {
    reports.push_back(gradcheck::check_op(op, seeds));
  }
  std::printf("%-24s %-14s %-12s %s\n", "op", "max_rel_err", "comparisons",
              "seconds");
  for (const auto& r : reports)
    std::printf("%-24s %-14.3e %-12lld %.2f\n", r.op.c_str(), r.max_rel_err,
                static_cast<long long>(r.comparisons), r.seconds);
  const bool ok = gradcheck::all_pass(reports);
  std::printf("%s (tolerance %.1e)\n", ok ? "PASS" : "FAIL",
              gradcheck::kTolerance);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical video understanding: synthetic corpus, training, "
               "evaluation, ablation, gradient checks"};
  app.require_subcommand(1);

  CommonFlags common;
  auto add_seed = [&common](CLI::App* sub) {
    sub->add_option_function<uint64_t>(
        "--seed",
        [&common](const uint64_t& s) {
          common.seed = s;
          common.seed_set = true;
        },
        "global seed (overrides config)");
    sub->add_option("--config", common.config_path, "JSON config file");
  };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  std::string gen_out;
  int64_t gen_train = 0, gen_val = 0, gen_test = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--train", gen_train, "training samples");
  gen->add_option("--val", gen_val, "validation samples");
  gen->add_option("--test", gen_test, "test samples");
  add_seed(gen);

  // train
  auto* train = app.add_subcommand("train", "run the staged training loop");
  std::string train_data, train_out, train_stages, train_weights, train_resume;
  int64_t train_epochs = 0;
  train->add_option("--data", train_data, "corpus directory");
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--stages", train_stages,
                    "stage schedule, e.g. \"1,0,0;1,1,0;1,1,1\"");
  train->add_option("--weights", train_weights,
                    "single-stage weights, e.g. \"0,1,0\"");
  train->add_option("--epochs-per-stage", train_epochs, "epochs per stage");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  add_seed(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_data, eval_split = "val", eval_weights, eval_out;
  eval->add_option("--checkpoint", eval_ckpt, "HVCK checkpoint")->required();
  eval->add_option("--data", eval_data, "corpus directory");
  eval->add_option("--split", eval_split, "train, val, or test");
  eval->add_option("--weights", eval_weights, "loss weights for reporting");
  eval->add_option("--out", eval_out, "write a metrics CSV here");
  add_seed(eval);

  // ablate
  auto* abl = app.add_subcommand("ablate",
                                 "train the five weight-vector rows and tabulate");
  std::string abl_data, abl_out;
  int abl_seeds = 5;
  int64_t abl_epochs = 0;
  abl->add_option("--data", abl_data, "corpus directory");
  abl->add_option("--out", abl_out, "output directory")->required();
  abl->add_option("--seeds", abl_seeds, "replications per row");
  abl->add_option("--epochs-per-stage", abl_epochs, "epochs per stage");
  add_seed(abl);

  // grad-check
  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference gradient verification");
  std::string gc_op;
  int gc_seeds = 10;
  gc->add_option("--op", gc_op, "restrict to one op");
  gc->add_option("--seeds", gc_seeds, "random instances per op");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(common, gen_out, gen_train, gen_val, gen_test);
    if (train->parsed())
      return cmd_train(common, train_data, train_out, train_stages,
                       train_weights, train_epochs, train_resume);
    if (eval->parsed())
      return cmd_eval(common, eval_ckpt, eval_data, eval_split, eval_weights,
                      eval_out);
    if (abl->parsed())
      return cmd_ablate(common, abl_data, abl_out, abl_seeds, abl_epochs);
    if (gc->parsed()) return cmd_grad_check(gc_op, gc_seeds);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
