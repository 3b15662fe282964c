#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hgcn/config.hpp"
#include "testutil.hpp"

using namespace hgcn;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  std::string capture =
      std::filesystem::temp_directory_path() /
      ("hgcn_cli_out_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::string cmd = std::string(HGCN_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(capture);
  r.out.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::filesystem::remove(capture);
  return r;
}

std::string tiny_train_config(const test::TmpDir& dir, const std::string& manifest,
                              int epochs, uint64_t seed) {
  RunConfig cfg;
  cfg.model = tiny_config();
  cfg.model.num_classes = 2;
  cfg.optim.batch_size = 4;
  cfg.optim.total_epochs = epochs;
  cfg.optim.warmup_epochs = 1;
  cfg.optim.step_epochs = {std::max(2, epochs - 1)};
  cfg.optim.step_factors = {0.1};
  cfg.seed = seed;
  cfg.manifest = manifest;
  cfg.data_root = dir.str();
  std::string path = dir.file("run.cfg");
  write_run_config(cfg, path);
  return path;
}

}  // namespace

TEST_CASE("missing config exits 2 and names the path") {
  RunResult r = run_cli("train --config /no/such/config.cfg --out /tmp/x");
  CHECK(r.code == 2);
  CHECK(r.out.find("/no/such/config.cfg") != std::string::npos);
}

TEST_CASE("missing checkpoint exits 2 or 3") {
  test::TmpDir dir("hgcn_cli_eval");
  auto samples = test::synthetic_set(2, 2, 8, 5, 3);
  std::string manifest = test::write_dataset(dir, samples);
  RunResult r = run_cli("eval --checkpoint /no/such.ckpt --manifest " + manifest +
                        " --data-root " + dir.str());
  CHECK(r.code == 3);  // data error: unreadable checkpoint
}

TEST_CASE("train, rerun, eval, scores and ensemble") {
  test::TmpDir dir("hgcn_cli_train");
  auto samples = test::synthetic_set(8, 2, 12, 5, 11);
  std::string manifest = test::write_dataset(dir, samples);
  std::string cfg = tiny_train_config(dir, manifest, 4, 77);

  RunResult r1 = run_cli("train --config " + cfg + " --out " + dir.file("runA"));
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("final_train_loss=") != std::string::npos);

  // metrics file has one line per epoch
  std::ifstream m(dir.file("runA") + "/metrics.log");
  int lines = 0;
  std::string line;
  while (std::getline(m, line)) ++lines;
  CHECK(lines == 4);

  // same seed, same bytes
  RunResult r2 = run_cli("train --config " + cfg + " --out " + dir.file("runB"));
  REQUIRE(r2.code == 0);
  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(dir.file("runA") + "/metrics.log") == slurp(dir.file("runB") + "/metrics.log"));

  // eval prints top1 with four decimals and writes one score row per sample
  RunResult ev = run_cli("eval --checkpoint " + dir.file("runA") + "/final.ckpt --manifest " +
                         manifest + " --data-root " + dir.str() + " --scores " +
                         dir.file("scores.csv"));
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("top1=") != std::string::npos);
  {
    std::ifstream f(dir.file("scores.csv"));
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 8);
  }

  // single-stream ensemble equals eval; duplicated stream changes nothing
  RunResult en1 = run_cli("ensemble " + dir.file("scores.csv"));
  REQUIRE(en1.code == 0);
  std::string top1_line = ev.out.substr(ev.out.find("top1="));
  top1_line = top1_line.substr(0, top1_line.find('\n'));
  CHECK(en1.out.find(top1_line) != std::string::npos);
  RunResult en2 = run_cli("ensemble " + dir.file("scores.csv") + " " + dir.file("scores.csv"));
  CHECK(en2.out == en1.out);

  // shape mismatch across streams exits 2 or 3
  {
    std::ofstream f(dir.file("bad.csv"));
    f << "0,1.0,2.0,3.0\n";
  }
  RunResult bad = run_cli("ensemble " + dir.file("scores.csv") + " " + dir.file("bad.csv"));
  CHECK(bad.code == 3);
}

TEST_CASE("overfit then perfect evaluation on the training set") {
  test::TmpDir dir("hgcn_cli_overfit");
  auto samples = test::synthetic_set(8, 2, 12, 5, 13);
  std::string manifest = test::write_dataset(dir, samples);
  std::string cfg = tiny_train_config(dir, manifest, 25, 99);

  RunResult r = run_cli("train --config " + cfg + " --out " + dir.file("run"));
  REQUIRE(r.code == 0);
  RunResult ev = run_cli("eval --checkpoint " + dir.file("run") + "/final.ckpt --manifest " +
                         manifest + " --data-root " + dir.str() + " --split val");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("top1=1.0000") != std::string::npos);
}

TEST_CASE("flops command prints budget-compatible numbers") {
  RunResult r = run_cli("flops");
  REQUIRE(r.code == 0);
  long long flops = 0, params = 0;
  std::istringstream ss(r.out);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.rfind("flops=", 0) == 0) flops = std::stoll(line.substr(6));
    if (line.rfind("params=", 0) == 0) params = std::stoll(line.substr(7));
  }
  CHECK(flops > 1.215e9);
  CHECK(flops < 2.025e9);
  CHECK(params >= 850000);
  CHECK(params <= 1150000);
}

TEST_CASE("export-graph writes per-layer per-branch csv files") {
  test::TmpDir dir("hgcn_cli_export");
  // small checkpoint via the library
  ModelConfig mc = tiny_config();
  HyperGcnModel model(mc, 7);
  save_checkpoint(model, dir.file("m.ckpt"));
  auto samples = test::synthetic_set(1, 2, 8, 5, 17);
  write_sequence(samples[0], dir.file("s.skl"));

  RunResult r = run_cli("export-graph --checkpoint " + dir.file("m.ckpt") + " --sample " +
                        dir.file("s.skl") + " --out " + dir.file("graphs"));
  REQUIRE(r.code == 0);

  int incidence = 0, weights = 0;
  for (auto& entry : std::filesystem::directory_iterator(dir.file("graphs"))) {
    std::string name = entry.path().filename().string();
    if (name.find("_incidence.csv") != std::string::npos) ++incidence;
    if (name.find("_weights.csv") != std::string::npos) ++weights;
  }
  // 9 layers x 7 adaptive branches (one branch runs with k = 0)
  CHECK(incidence == 63);
  CHECK(weights == 63);

  // incidence matrices are (V + V_h)^2 = 7x7
  std::ifstream f(dir.file("graphs") + "/layer0_branch1_incidence.csv");
  std::string line;
  int rows = 0, cols = 0;
  while (std::getline(f, line)) {
    ++rows;
    cols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  }
  CHECK(rows == 7);
  CHECK(cols == 7);
}

TEST_CASE("export-graph on the full-size configuration writes 72 files of 28x28") {
  test::TmpDir dir("hgcn_cli_export_full");
  ModelConfig mc;  // V=25, V_h=3, all eight branches adaptive
  HyperGcnModel model(mc, 7);
  save_checkpoint(model, dir.file("m.ckpt"));
  auto samples = test::synthetic_set(1, 2, 16, 25, 19);
  write_sequence(samples[0], dir.file("s.skl"));

  RunResult r = run_cli("export-graph --checkpoint " + dir.file("m.ckpt") + " --sample " +
                        dir.file("s.skl") + " --out " + dir.file("graphs"));
  REQUIRE(r.code == 0);
  int incidence = 0;
  for (auto& entry : std::filesystem::directory_iterator(dir.file("graphs")))
    if (entry.path().filename().string().find("_incidence.csv") != std::string::npos)
      ++incidence;
  CHECK(incidence == 72);

  std::ifstream f(dir.file("graphs") + "/layer4_branch5_incidence.csv");
  std::string line;
  int rows = 0, cols = 0;
  while (std::getline(f, line)) {
    ++rows;
    cols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  }
  CHECK(rows == 28);
  CHECK(cols == 28);
}

TEST_CASE("gradcheck command prints a pass line") {
  RunResult r = run_cli("gradcheck");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("gradcheck=PASS") != std::string::npos);
  CHECK(r.out.find("max_rel_error=") != std::string::npos);
}
