// Command line surface: train, eval, ensemble, gradcheck, flops, export-graph.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hgcn/config.hpp"
#include "hgcn/graph.hpp"
#include "hgcn/network.hpp"
#include "hgcn/train.hpp"

namespace {

using namespace hgcn;

void write_scores(const Mat& logits, const std::vector<int>& labels, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_data("cannot write score file: " + path);
  char buf[64];
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    f << labels[i];
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", logits(i, j));
      f << "," << buf;
    }
    f << "\n";
  }
}

void read_scores(const std::string& path, Mat& logits, std::vector<int>& labels) {
  std::ifstream f(path);
  if (!f) fail_data("cannot open score file: " + path);
  std::vector<std::vector<real>> rows;
  labels.clear();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) fail_data("malformed score line in " + path);
    labels.push_back(std::stoi(cell));
    std::vector<real> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows[0].size())
      fail_data("ShapeMismatch: ragged score file " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail_data("empty score file: " + path);
  logits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) logits(i, j) = rows[i][j];
}

std::vector<int> pick_split(const Dataset& data, const std::string& split) {
  if (split == "train") return data.train_idx;
  if (split == "val") return data.val_idx;
  if (split == "all") {
    std::vector<int> all(data.seqs.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  fail_config("unknown split '" + split + "'");
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  RunConfig cfg = parse_run_config(config_path);
  TrainSummary s = run_training(cfg, out_dir);
  std::printf("final_train_loss=%.6f\n", s.final_train_loss);
  std::printf("final_train_acc=%.4f\n", s.final_train_acc);
  std::printf("best_val_acc=%.4f\n", s.best_val_acc);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& root,
             const std::string& modality, const std::string& split,
             const std::string& score_path, int batch_size) {
  auto model = load_checkpoint(ckpt);
  Dataset data = load_dataset(manifest, root);
  std::vector<int> idx = pick_split(data, split);
  Modality m = modality_by_name(modality);

  Mat logits;
  std::vector<int> labels;
  collect_scores(*model, data, idx, m, batch_size, logits, labels);
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    if (argmax_row(logits, static_cast<int>(i)) == labels[i]) ++correct;
  real top1 = logits.rows() > 0 ? static_cast<real>(correct) / logits.rows() : 0;
  std::printf("top1=%.4f\n", top1);
  if (!score_path.empty()) write_scores(logits, labels, score_path);
  return 0;
}

int cmd_ensemble(const std::vector<std::string>& files, const std::vector<real>& weights_in) {
  std::vector<Mat> streams(files.size());
  std::vector<std::vector<int>> labels(files.size());
  for (size_t i = 0; i < files.size(); ++i) read_scores(files[i], streams[i], labels[i]);
  for (size_t i = 1; i < files.size(); ++i)
    if (labels[i] != labels[0]) fail_data("ShapeMismatch: label columns differ across streams");
  std::vector<real> weights = weights_in;
  if (weights.empty()) weights.assign(files.size(), 1.0);
  real acc = ensemble_scores(streams, labels[0], weights);
  std::printf("top1=%.4f\n", acc);
  return 0;
}

int cmd_gradcheck(const std::string& config_path, real tolerance, uint64_t seed) {
  ModelConfig cfg = tiny_config();
  if (!config_path.empty()) cfg = parse_run_config(config_path).model;
  GradcheckReport rep = gradcheck(cfg, tolerance, seed);
  for (const auto& [group, err] : rep.group_error)
    std::printf("group.%s=%.3e\n", group.c_str(), err);
  std::printf("max_rel_error=%.3e\n", rep.max_rel_error);
  std::printf("checked=%zu\n", rep.checked);
  std::printf("skipped=%zu\n", rep.skipped);
  std::printf("attempts=%d\n", rep.attempts);
  std::printf("gradcheck=%s\n", rep.pass ? "PASS" : "FAIL");
  return rep.pass ? 0 : 4;
}

int cmd_flops(const std::string& config_path, int t_in, int joints) {
  ModelConfig cfg;  // default full-size configuration
  if (!config_path.empty()) cfg = parse_run_config(config_path).model;
  int v = joints > 0 ? joints : layout_by_name(cfg.layout).joint_count;
  int t = t_in > 0 ? t_in : cfg.t_in;
  long long flops = estimate_flops(cfg, t, v);
  HyperGcnModel model(cfg);
  std::printf("flops=%lld\n", flops);
  std::printf("params=%lld\n", count_params(model));
  return 0;
}

int cmd_export_graph(const std::string& ckpt, const std::string& sample_path,
                     const std::string& out_dir, const std::string& modality) {
  auto model = load_checkpoint(ckpt);
  SkeletonSequence seq = load_sequence(sample_path);
  std::filesystem::create_directories(out_dir);

  std::vector<const SkeletonSequence*> seqs = {&seq};
  Batch batch = assemble_batch(seqs, model->layout, modality_by_name(modality),
                               model->cfg.t_in);
  GraphCapture capture;
  FwdCtx ctx = eval_ctx();
  ctx.capture = &capture;
  model->forward(batch, ctx);

  for (const GraphSnapshot& s : capture.snapshots) {
    std::string stem = out_dir + "/layer" + std::to_string(s.layer) + "_branch" +
                       std::to_string(s.branch);
    write_matrix_csv(s.incidence, stem + "_incidence.csv");
    write_vector_csv(s.edge_weights, stem + "_weights.csv");
    write_matrix_csv(s.propagator, stem + "_propagator.csv");
  }
  std::printf("snapshots=%zu\n", capture.snapshots.size());
  std::printf("out_dir=%s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive hypergraph convolution network for skeleton action recognition"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, manifest, root, sample_path, score_path;
  std::string modality = "joint", split = "val";
  std::vector<std::string> score_files;
  std::vector<hgcn::real> weights;
  double tolerance = 1e-4;
  uint64_t seed = 7;
  int batch_size = 16, t_in = 0, joints = 0;

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_dir)->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--manifest", manifest)->required();
  eval->add_option("--data-root", root)->required();
  eval->add_option("--modality", modality);
  eval->add_option("--split", split);
  eval->add_option("--scores", score_path);
  eval->add_option("--batch-size", batch_size);

  auto* ens = app.add_subcommand("ensemble", "Fuse per-stream score files");
  ens->add_option("files", score_files)->required()->expected(-1);
  ens->add_option("--weights", weights);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gc->add_option("--config", config_path);
  gc->add_option("--tolerance", tolerance);
  gc->add_option("--seed", seed);

  auto* fl = app.add_subcommand("flops", "Analytic FLOP and parameter counts");
  fl->add_option("--config", config_path);
  fl->add_option("--t", t_in);
  fl->add_option("--joints", joints);

  auto* ex = app.add_subcommand("export-graph", "Dump per-layer adaptive topologies as CSV");
  ex->add_option("--checkpoint", ckpt)->required();
  ex->add_option("--sample", sample_path)->required();
  ex->add_option("--out", out_dir)->required();
  ex->add_option("--modality", modality);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (eval->parsed())
      return cmd_eval(ckpt, manifest, root, modality, split, score_path, batch_size);
    if (ens->parsed()) return cmd_ensemble(score_files, weights);
    if (gc->parsed()) return cmd_gradcheck(config_path, tolerance, seed);
    if (fl->parsed()) return cmd_flops(config_path, t_in, joints);
    if (ex->parsed()) return cmd_export_graph(ckpt, sample_path, out_dir, modality);
  } catch (const hgcn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
