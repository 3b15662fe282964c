#include "hgcn/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace hgcn {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

long to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail_config("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

real to_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    real r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail_config("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_config("cannot open config file: " + path);

  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail_config("config line " + std::to_string(lineno) + " is not key=value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (kv.count(key)) fail_config("duplicate config key '" + key + "'");
    kv[key] = val;
  }

  RunConfig cfg;
  auto take = [&](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) return "";
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  if (auto v = take("seed"); !v.empty()) cfg.seed = static_cast<uint64_t>(to_int("seed", v));
  if (auto v = take("layout"); !v.empty()) cfg.model.layout = v;
  if (auto v = take("num_classes"); !v.empty())
    cfg.model.num_classes = static_cast<int>(to_int("num_classes", v));
  if (auto v = take("hyper_joints"); !v.empty())
    cfg.model.v_h = static_cast<int>(to_int("hyper_joints", v));
  if (auto v = take("t_in"); !v.empty()) cfg.model.t_in = static_cast<int>(to_int("t_in", v));
  if (auto v = take("layers_per_stage"); !v.empty())
    cfg.model.layers_per_stage = static_cast<int>(to_int("layers_per_stage", v));
  if (auto v = take("label_smoothing"); !v.empty())
    cfg.model.label_smoothing = to_real("label_smoothing", v);
  if (auto v = take("channels"); !v.empty()) {
    auto parts = split_csv(v);
    if (parts.size() != kStages) fail_config("channels expects 3 comma-separated values");
    for (int i = 0; i < kStages; ++i)
      cfg.model.channels[i] = static_cast<int>(to_int("channels", parts[i]));
  }
  if (auto v = take("strides"); !v.empty()) {
    auto parts = split_csv(v);
    if (parts.size() != kStages) fail_config("strides expects 3 comma-separated values");
    for (int i = 0; i < kStages; ++i)
      cfg.model.strides[i] = static_cast<int>(to_int("strides", parts[i]));
  }
  if (auto v = take("k_scales"); !v.empty()) {
    auto parts = split_csv(v);
    if (parts.size() != kBranches) fail_config("k_scales expects 8 comma-separated values");
    for (int i = 0; i < kBranches; ++i)
      cfg.model.k_scales[i] = static_cast<int>(to_int("k_scales", parts[i]));
  }

  if (auto v = take("base_lr"); !v.empty()) cfg.optim.base_lr = to_real("base_lr", v);
  if (auto v = take("momentum"); !v.empty()) cfg.optim.momentum = to_real("momentum", v);
  if (auto v = take("weight_decay"); !v.empty())
    cfg.optim.weight_decay = to_real("weight_decay", v);
  if (auto v = take("warmup_epochs"); !v.empty())
    cfg.optim.warmup_epochs = static_cast<int>(to_int("warmup_epochs", v));
  if (auto v = take("total_epochs"); !v.empty())
    cfg.optim.total_epochs = static_cast<int>(to_int("total_epochs", v));
  if (auto v = take("batch_size"); !v.empty())
    cfg.optim.batch_size = static_cast<int>(to_int("batch_size", v));
  if (auto v = take("step_epochs"); !v.empty()) {
    cfg.optim.step_epochs.clear();
    for (auto& p : split_csv(v))
      cfg.optim.step_epochs.push_back(static_cast<int>(to_int("step_epochs", p)));
  }
  if (auto v = take("step_factors"); !v.empty()) {
    cfg.optim.step_factors.clear();
    for (auto& p : split_csv(v)) cfg.optim.step_factors.push_back(to_real("step_factors", p));
  }

  if (auto v = take("modality"); !v.empty()) cfg.modality = v;
  cfg.data_root = take("data_root");
  cfg.manifest = take("manifest");

  if (!kv.empty()) fail_config("unknown config key '" + kv.begin()->first + "'");

  if (const char* env = std::getenv("HGCN_SEED"))
    cfg.seed = static_cast<uint64_t>(std::strtoull(env, nullptr, 10));

  // Schema-level validation.
  cfg.model.validate();
  cfg.optim.validate();
  modality_by_name(cfg.modality);
  layout_by_name(cfg.model.layout);
  if (!cfg.manifest.empty() && !std::filesystem::exists(cfg.manifest))
    fail_config("manifest path does not exist: " + cfg.manifest);
  if (!cfg.data_root.empty() && !std::filesystem::is_directory(cfg.data_root))
    fail_config("data_root is not a directory: " + cfg.data_root);
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](real v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  out << "seed=" << cfg.seed << "\n";
  out << "layout=" << cfg.model.layout << "\n";
  out << "num_classes=" << cfg.model.num_classes << "\n";
  out << "hyper_joints=" << cfg.model.v_h << "\n";
  out << "t_in=" << cfg.model.t_in << "\n";
  out << "layers_per_stage=" << cfg.model.layers_per_stage << "\n";
  out << "label_smoothing=" << num(cfg.model.label_smoothing) << "\n";
  out << "channels=" << cfg.model.channels[0] << "," << cfg.model.channels[1] << ","
      << cfg.model.channels[2] << "\n";
  out << "strides=" << cfg.model.strides[0] << "," << cfg.model.strides[1] << ","
      << cfg.model.strides[2] << "\n";
  out << "k_scales=";
  for (int i = 0; i < kBranches; ++i) out << cfg.model.k_scales[i] << (i + 1 < kBranches ? "," : "");
  out << "\n";
  out << "base_lr=" << num(cfg.optim.base_lr) << "\n";
  out << "momentum=" << num(cfg.optim.momentum) << "\n";
  out << "weight_decay=" << num(cfg.optim.weight_decay) << "\n";
  out << "warmup_epochs=" << cfg.optim.warmup_epochs << "\n";
  out << "total_epochs=" << cfg.optim.total_epochs << "\n";
  out << "batch_size=" << cfg.optim.batch_size << "\n";
  out << "step_epochs=";
  for (size_t i = 0; i < cfg.optim.step_epochs.size(); ++i)
    out << cfg.optim.step_epochs[i] << (i + 1 < cfg.optim.step_epochs.size() ? "," : "");
  out << "\n";
  out << "step_factors=";
  for (size_t i = 0; i < cfg.optim.step_factors.size(); ++i)
    out << num(cfg.optim.step_factors[i]) << (i + 1 < cfg.optim.step_factors.size() ? "," : "");
  out << "\n";
  out << "modality=" << cfg.modality << "\n";
  if (!cfg.data_root.empty()) out << "data_root=" << cfg.data_root << "\n";
  if (!cfg.manifest.empty()) out << "manifest=" << cfg.manifest << "\n";
  return out.str();
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail_config("cannot write config: " + path);
  f << serialize_run_config(cfg);
}

TrainSummary run_training(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.manifest.empty() || cfg.data_root.empty())
    fail_config("training needs manifest and data_root");
  std::filesystem::create_directories(out_dir);

  Dataset data = load_dataset(cfg.manifest, cfg.data_root);
  Modality modality = modality_by_name(cfg.modality);

  HyperGcnModel model(cfg.model, cfg.seed);
  TrainState state;
  state.init(model, cfg.seed);

  std::ofstream metrics(out_dir + "/metrics.log", std::ios::trunc);
  if (!metrics) fail_data("cannot write metrics log in " + out_dir);

  TrainSummary summary;
  char line[256];
  for (int epoch = 0; epoch < cfg.optim.total_epochs; ++epoch) {
    real lr = lr_at(epoch, cfg.optim);
    EpochMetrics m = train_epoch(model, data, state, cfg.optim, modality);
    real val_acc = evaluate(model, data, data.val_idx, modality, cfg.optim.batch_size);
    if (val_acc >= state.best_val_acc) {
      state.best_val_acc = val_acc;
      save_checkpoint(model, out_dir + "/best.ckpt");
    }
    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\t%.4f\t%.4f\n", epoch, lr, m.mean_loss,
                  m.accuracy, val_acc);
    metrics << line;
    summary.final_train_loss = m.mean_loss;
    summary.final_train_acc = m.accuracy;
  }
  metrics.close();

  save_checkpoint(model, out_dir + "/final.ckpt");
  summary.best_val_acc = state.best_val_acc;

  std::ofstream sf(out_dir + "/summary.txt", std::ios::trunc);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "epochs=%d\n", cfg.optim.total_epochs);
  sf << buf;
  std::snprintf(buf, sizeof(buf), "final_train_loss=%.6f\n", summary.final_train_loss);
  sf << buf;
  std::snprintf(buf, sizeof(buf), "final_train_acc=%.4f\n", summary.final_train_acc);
  sf << buf;
  std::snprintf(buf, sizeof(buf), "best_val_acc=%.4f\n", summary.best_val_acc);
  sf << buf;
  return summary;
}

}  // namespace hgcn
