#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "hiervid/check.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef HIERVID_CLI_PATH
#error "HIERVID_CLI_PATH must point at the built binary"
#endif

const char* kCli = HIERVID_CLI_PATH;

struct RunOutcome {
  int code;
  std::string output;
};

RunOutcome run(const std::string& args) {
  const fs::path out = fs::temp_directory_path() / "hiervid_cli_out.txt";
  const std::string cmd =
      std::string(kCli) + " " + args + " > " + out.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(out);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return {WEXITSTATUS(raw), text};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "hiervid_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// tiny corpus + config shared by the CLI tests
const fs::path& config_path() {
  static const fs::path path = [] {
    const fs::path p = work_dir() / "run.json";
    std::ofstream out(p);
    out << R"({
  "seed": 9,
  "data": {"canvas": 64, "frames_min": 24, "frames_max": 32, "train": 12, "val": 4, "test": 4},
  "encoder": {"channels": [2,2,2,2,3,3], "lstm_hidden": 2},
  "heads": {"embed_dim": 3, "decoder_hidden": 4},
  "train": {"batch_size": 6, "epochs_per_stage": 1, "stages": [[1,1,1]]}
})";
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("gen-data requires --out with a usage error") {
  auto r = run("gen-data");
  CHECK(r.code == 2);
  CHECK(r.output.find("--out") != std::string::npos);
}

TEST_CASE("gen-data writes a corpus and reruns produce identical manifests") {
  const auto data1 = work_dir() / "data1";
  const auto data2 = work_dir() / "data2";
  auto r1 = run("gen-data --config " + config_path().string() + " --out " +
                data1.string());
  CHECK(r1.code == 0);
  CHECK(r1.output.find("12 train") != std::string::npos);
  CHECK(fs::exists(data1 / "resolved_config.json"));
  CHECK(fs::exists(data1 / "taxonomy.json"));

  auto r2 = run("gen-data --config " + config_path().string() + " --out " +
                data2.string());
  REQUIRE(r2.code == 0);
  CHECK(slurp(data1 / "train.jsonl") == slurp(data2 / "train.jsonl"));
  CHECK(slurp(data1 / "val.jsonl") == slurp(data2 / "val.jsonl"));
  CHECK(slurp(data1 / "test.jsonl") == slurp(data2 / "test.jsonl"));
}

TEST_CASE("train runs the schedule, eval reads the checkpoint back") {
  const auto data = work_dir() / "data1";
  const auto run_dir = work_dir() / "run1";
  auto r = run("train --config " + config_path().string() + " --data " +
               data.string() + " --out " + run_dir.string() +
               " --stages \"1,0,0;1,1,1\" --epochs-per-stage 1");
  CHECK(r.code == 0);
  CHECK(fs::exists(run_dir / "metrics.csv"));
  CHECK(fs::exists(run_dir / "resolved_config.json"));
  CHECK(fs::exists(run_dir / "stage1.hvck"));
  CHECK(fs::exists(run_dir / "stage2.hvck"));

  auto e = run("eval --config " + config_path().string() + " --checkpoint " +
               (run_dir / "stage2.hvck").string() + " --data " + data.string() +
               " --split test");
  CHECK(e.code == 0);
  CHECK(e.output.find("coarse-grained accuracy:") != std::string::npos);
  CHECK(e.output.find("fine-grained accuracy:") != std::string::npos);
  CHECK(e.output.find("captioning accuracy:") != std::string::npos);

  // deterministic: eval twice gives identical output
  auto e2 = run("eval --config " + config_path().string() + " --checkpoint " +
                (run_dir / "stage2.hvck").string() + " --data " + data.string() +
                " --split test");
  CHECK(e2.output == e.output);

  // --weights single-stage baseline
  const auto run_dir2 = work_dir() / "run2";
  auto b = run("train --config " + config_path().string() + " --data " +
               data.string() + " --out " + run_dir2.string() +
               " --weights 0,1,0 --epochs-per-stage 1");
  CHECK(b.code == 0);
}

TEST_CASE("grad-check restricted to one op reports and passes") {
  auto r = run("grad-check --op affine --seeds 3");
  CHECK(r.code == 0);
  CHECK(r.output.find("affine") != std::string::npos);
  CHECK(r.output.find("PASS") != std::string::npos);

  auto bad = run("grad-check --op no_such_op --seeds 1");
  CHECK(bad.code == 1);
}

TEST_CASE("the output-directory lockfile rejects concurrent runs") {
  const auto data = work_dir() / "data1";
  const auto run_dir = work_dir() / "locked";
  fs::create_directories(run_dir);
  std::ofstream(run_dir / ".lock") << "";
  auto r = run("train --config " + config_path().string() + " --data " +
               data.string() + " --out " + run_dir.string() +
               " --epochs-per-stage 1");
  CHECK(r.code == 1);
  CHECK(r.output.find("locked") != std::string::npos);
}
