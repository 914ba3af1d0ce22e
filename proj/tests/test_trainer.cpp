#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hiervid/ablate.hpp"
#include "hiervid/config.hpp"
#include "hiervid/trainer.hpp"

using namespace hiervid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// a small corpus on disk, shared across the trainer tests
const std::string& corpus_dir() {
  static const std::string dir = [] {
    fs::path d = fs::temp_directory_path() / "hiervid_test_trainer_corpus";
    fs::remove_all(d);
    SyntheticSpec spec;
    spec.seed = 404;
    spec.canvas = 64;  // small canvas; the resize stage upsamples to 128
    spec.frames_min = 24;
    spec.frames_max = 40;
    generate_corpus(spec, build_taxonomy(), CorpusCounts{16, 6, 6}, d.string());
    return d.string();
  }();
  return dir;
}

ModelSettings tiny_settings() {
  ModelSettings s;
  s.encoder.channels = {2, 2, 2, 2, 3, 3};
  s.encoder.lstm_hidden = 2;
  s.embed_dim = 3;
  s.decoder_hidden = 4;
  return s;
}

TrainConfig tiny_train_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs_per_stage = 1;
  cfg.stages = {{1, 1, 1}};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("exact_match is word-by-word after stripping specials") {
  // "red circle slides left" as ids, with structural specials around it
  std::vector<int64_t> ref = {1, 4, 5, 6, 7, 2, 0, 0};
  CHECK(exact_match({4, 5, 6, 7}, ref) == 1);
  CHECK(exact_match({4, 9, 6, 7}, ref) == 0);  // one word off -> no credit
  CHECK(exact_match({4, 5}, ref) == 0);        // prefix -> no credit
  CHECK(exact_match({}, {1, 2, 0}) == 1);      // both empty after stripping
}

TEST_CASE("top1_accuracy tie-break and arithmetic") {
  auto onehot = Tensor<float>::from_vector(Shape{2, 3}, {0, 1, 0, 0, 0, 1});
  CHECK(top1_accuracy(onehot, {1, 2}) == 1.0);

  auto uniform = Tensor<float>::full(Shape{3, 4}, 0.25f);
  CHECK(top1_accuracy(uniform, {0, 0, 0}) == 1.0);  // ties go to index 0
  CHECK(top1_accuracy(uniform, {1, 0, 2}) == doctest::Approx(1.0 / 3));

  auto half = Tensor<float>::from_vector(Shape{2, 2}, {0.9f, 0.1f, 0.9f, 0.1f});
  CHECK(top1_accuracy(half, {0, 1}) == 0.5);
}

TEST_CASE("metrics csv format") {
  MetricsRow row;
  row.stage = 2;
  row.epoch = 3;
  row.split = "val";
  row.acc_group = 0.5;
  row.acc_category = 0.25;
  row.caption_exact = 0.125;
  row.losses.loss_group = 1.5;
  row.losses.total = 1.5;
  CHECK(metrics_csv_header() ==
        "stage,epoch,split,acc_group,acc_category,caption_exact,loss_group,"
        "loss_category,loss_caption,total");
  CHECK(metrics_csv_row(row) ==
        "2,3,val,0.500000,0.250000,0.125000,1.500000,,,1.500000");
}

TEST_CASE("checkpoints round-trip bitwise and validate the architecture") {
  DataSource data = DataSource::load(corpus_dir());
  Model<float> model = build_model(tiny_settings(), data);
  model.init_params(11);
  Adam<float> opt(model.params, 1e-3);

  // a couple of real updates so the moments are nonzero
  TrainConfig cfg = tiny_train_config(11);
  Trainer trainer(model, data, cfg);
  std::vector<ManifestEntry> batch(data.train.begin(), data.train.begin() + 8);
  trainer.train_step(batch, LossWeights{1, 1, 1}, 0);

  fs::path dir = fs::temp_directory_path() / "hiervid_test_ckpt";
  fs::create_directories(dir);
  const auto p1 = (dir / "a.hvck").string();
  const auto p2 = (dir / "b.hvck").string();
  CheckpointState state = trainer.snapshot(1, 2);
  save_checkpoint(state, p1);
  CheckpointState loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(loaded.stage == 1);
  CHECK(loaded.epoch_in_stage == 2);
  CHECK(loaded.adam_step == 1);

  // restoring into a mismatched architecture names the first bad shape
  ModelSettings wider = tiny_settings();
  wider.encoder.channels = {4, 2, 2, 2, 3, 3};
  Model<float> other = build_model(wider, data);
  Adam<float> other_opt(other.params);
  CHECK_THROWS_WITH_AS(restore_training(loaded, other, other_opt),
                       doctest::Contains("encoder.conv1.kernel"), Error);

  // truncation is named
  fs::resize_file(p1, 100);
  CHECK_THROWS_WITH_AS(load_checkpoint(p1), doctest::Contains("truncated"), Error);
}

TEST_CASE("two runs with the same config produce identical loss trajectories") {
  DataSource data = DataSource::load(corpus_dir());
  TrainConfig cfg = tiny_train_config(21);

  std::vector<double> first;
  for (int run = 0; run < 2; ++run) {
    Model<float> model = build_model(tiny_settings(), data);
    model.init_params(cfg.seed);
    Trainer trainer(model, data, cfg);
    TrainResult result = trainer.run();
    REQUIRE(!result.loss_trajectory.empty());
    if (run == 0)
      first = result.loss_trajectory;
    else
      CHECK(result.loss_trajectory == first);  // bitwise
  }
}

TEST_CASE("stage 1 with W=[1,0,0] leaves unsupervised parameters bit-identical") {
  DataSource data = DataSource::load(corpus_dir());
  Model<float> model = build_model(tiny_settings(), data);
  model.init_params(31);

  std::vector<std::vector<float>> before;
  for (const auto& [name, tensor] : model.params.items())
    before.push_back(tensor.values());

  TrainConfig cfg = tiny_train_config(31);
  cfg.stages = {{1, 0, 0}};
  cfg.epochs_per_stage = 2;
  cfg.reset_optimizer_between_stages = false;
  Trainer trainer(model, data, cfg);
  TrainResult result = trainer.run();
  CHECK(!result.aborted_non_finite);

  const auto& items = model.params.items();
  bool group_path_moved = false;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& name = items[i].first;
    if (name.rfind("heads.category.", 0) == 0 || name.rfind("decoder.", 0) == 0) {
      INFO("parameter ", name);
      CHECK(items[i].second.values() == before[i]);
    } else if (items[i].second.values() != before[i]) {
      group_path_moved = true;
    }
  }
  CHECK(group_path_moved);
}

TEST_CASE("resume from a mid-stage checkpoint continues the exact trajectory") {
  DataSource data = DataSource::load(corpus_dir());
  fs::path dir = fs::temp_directory_path() / "hiervid_test_resume";
  fs::remove_all(dir);

  // straight run: one stage, 4 epochs
  TrainConfig full_cfg = tiny_train_config(41);
  full_cfg.epochs_per_stage = 4;
  Model<float> straight = build_model(tiny_settings(), data);
  straight.init_params(41);
  Trainer full(straight, data, full_cfg);
  TrainResult full_result = full.run();

  // split run: 2 epochs, checkpoint, then 2 more via resume
  TrainConfig head_cfg = full_cfg;
  head_cfg.epochs_per_stage = 2;
  Model<float> split = build_model(tiny_settings(), data);
  split.init_params(41);
  Trainer head(split, data, head_cfg);
  TrainResult head_result = head.run((dir / "head").string());
  REQUIRE(!head_result.last_checkpoint.empty());
  // last.hvck holds the epoch-2 state of stage 0: mid-stage for the 4-epoch
  // schedule the resumed trainer runs
  CheckpointState mid = load_checkpoint((dir / "head" / "last.hvck").string());
  CHECK(mid.stage == 0);
  CHECK(mid.epoch_in_stage == 2);

  Model<float> resumed_model = build_model(tiny_settings(), data);
  Trainer tail(resumed_model, data, full_cfg);
  TrainResult tail_result = tail.resume(mid);

  std::vector<double> stitched = head_result.loss_trajectory;
  stitched.insert(stitched.end(), tail_result.loss_trajectory.begin(),
                  tail_result.loss_trajectory.end());
  CHECK(stitched == full_result.loss_trajectory);  // bitwise
}

TEST_CASE("a non-finite loss aborts and retains the last good checkpoint") {
  DataSource data = DataSource::load(corpus_dir());
  Model<float> model = build_model(tiny_settings(), data);
  model.init_params(51);
  // poison one parameter so the first loss is NaN
  model.params.get("heads.group.bias").data()[0] =
      std::numeric_limits<float>::quiet_NaN();

  fs::path dir = fs::temp_directory_path() / "hiervid_test_abort";
  fs::remove_all(dir);
  TrainConfig cfg = tiny_train_config(51);
  Trainer trainer(model, data, cfg);
  TrainResult result = trainer.run(dir.string());
  CHECK(result.aborted_non_finite);
  CHECK(fs::exists(dir / "last.hvck"));  // pre-training state retained
}

TEST_CASE("evaluate is a pure function of checkpoint and split") {
  DataSource data = DataSource::load(corpus_dir());
  Model<float> model = build_model(tiny_settings(), data);
  model.init_params(61);
  TrainConfig cfg = tiny_train_config(61);
  Trainer trainer(model, data, cfg);
  MetricsRow a = trainer.evaluate("val", LossWeights{1, 1, 1}, 1, 1);
  MetricsRow b = trainer.evaluate("val", LossWeights{1, 1, 1}, 1, 1);
  CHECK(a.acc_group == b.acc_group);
  CHECK(a.acc_category == b.acc_category);
  CHECK(a.caption_exact == b.caption_exact);
  CHECK(a.losses.total == b.losses.total);
}

TEST_CASE("run writes metrics.csv with the pinned header") {
  DataSource data = DataSource::load(corpus_dir());
  Model<float> model = build_model(tiny_settings(), data);
  model.init_params(71);
  fs::path dir = fs::temp_directory_path() / "hiervid_test_csv";
  fs::remove_all(dir);
  TrainConfig cfg = tiny_train_config(71);
  Trainer trainer(model, data, cfg);
  trainer.run(dir.string());
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv.rfind(metrics_csv_header() + "\n", 0) == 0);
  CHECK(csv.find(",val,") != std::string::npos);
  CHECK(csv.find(",test,") != std::string::npos);
  CHECK(fs::exists(dir / "stage1.hvck"));
}

TEST_CASE("ablate emits the five paper rows with mean and std") {
  DataSource data = DataSource::load(corpus_dir());
  TrainConfig base = tiny_train_config(81);
  fs::path dir = fs::temp_directory_path() / "hiervid_test_ablate";
  fs::remove_all(dir);
  AblationReport report = ablate(tiny_settings(), data, base, 2, dir.string());
  REQUIRE(report.rows.size() == 5);
  CHECK(report.rows[0].label == "W=[0,1,0]");
  CHECK(report.rows[1].label == "W=[0,0,1]");
  CHECK(report.rows[2].label == "W=[1,0,0]");
  CHECK(report.rows[3].label == "W=[1,1,0]");
  CHECK(report.rows[4].label == "W=[1,1,1]");
  for (const auto& row : report.rows) CHECK(row.per_seed.size() == 2);
  CHECK(fs::exists(dir / "ablation.csv"));
  CHECK(fs::exists(dir / "ablation.txt"));
  // 5 data rows + header in the csv
  int lines = 0;
  for (char c : report.csv)
    if (c == '\n') ++lines;
  CHECK(lines == 6);
  CHECK(report.table.find("W=[1,1,1]") != std::string::npos);
}

TEST_CASE("config round-trips with defaults filled and rejects unknown keys") {
  RunConfig cfg = RunConfig::from_json_text("{\"seed\": 123}");
  CHECK(cfg.seed == 123);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.train.epochs_per_stage == 20);
  CHECK(cfg.model.encoder.channels == std::vector<int64_t>{16, 16, 32, 32, 64, 64});
  CHECK(cfg.data.canvas == 160);
  CHECK(cfg.data.seed == 123);
  CHECK(cfg.train.seed == 123);

  // resolved dump parses back identically
  RunConfig again = RunConfig::from_json_text(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());

  CHECK_THROWS_WITH_AS(RunConfig::from_json_text("{\"sede\": 1}"),
                       doctest::Contains("unknown key"), Error);
  CHECK_THROWS_WITH_AS(
      RunConfig::from_json_text("{\"train\": {\"lr\": 0.1, \"bad\": 2}}"),
      doctest::Contains("unknown key"), Error);
  CHECK_THROWS_WITH_AS(
      RunConfig::from_json_text("{\"encoder\": {\"activation\": \"gelu\"}}"),
      doctest::Contains("unknown activation"), Error);
}

TEST_CASE("weights and stages parse from flag syntax") {
  LossWeights w = parse_weights("0.5, 1, 2");
  CHECK(w.group == 0.5);
  CHECK(w.category == 1.0);
  CHECK(w.caption == 2.0);
  auto stages = parse_stages("1,0,0;1,1,0;1,1,1");
  REQUIRE(stages.size() == 3);
  CHECK(stages[1].category == 1.0);
  CHECK_THROWS_AS(parse_weights("1,2"), Error);
  CHECK_THROWS_AS(parse_weights("-1,0,0"), Error);
}
