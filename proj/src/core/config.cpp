#include "core/config.hpp"

#include <cstdio>
#include <fstream>

#include "core/serialize.hpp"

namespace corld {

namespace {

constexpr const char* kConfigVersion = "CORLD-CFG v1";
constexpr const char* kRunVersion = "CORLD-RUN v1";

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  fail_invalid("config", "bad boolean '" + v + "' for " + key);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_to_kv(const TrainConfig& cfg) {
  return {
      {"eta0", fmt_g(cfg.eta0)},
      {"epochs_corld", std::to_string(cfg.epochs_corld)},
      {"epochs_clf", std::to_string(cfg.epochs_clf)},
      {"eps_corld", fmt_g(cfg.eps_corld)},
      {"eps_clf", fmt_g(cfg.eps_clf)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"seed", std::to_string(cfg.seed)},
      {"sigma", fmt_g(cfg.weights.sigma)},
      {"delta", fmt_g(cfg.weights.delta)},
      {"beta", fmt_g(cfg.weights.beta)},
      {"gamma", fmt_g(cfg.weights.gamma)},
      {"tau", fmt_g(cfg.weights.tau)},
      {"weight_decay", fmt_g(cfg.weights.weight_decay)},
      {"candidate_set",
       cfg.candidate_set == CandidateSet::AllOthers ? "all_others" : "different_class_only"},
      {"fuse_source", cfg.fuse_source == FuseSource::Projected ? "projected" : "latent"},
      {"finetune_shape", cfg.finetune_shape ? "1" : "0"},
      {"template_mode", cfg.template_mode == TemplateMode::Multi ? "multi" : "single"},
      {"contrastive_on", cfg.contrastive_on ? "1" : "0"},
      {"template_in_input", cfg.template_in_input ? "1" : "0"},
      {"float_mode", dtype_name(cfg.float_mode)},
      {"exp_steps", std::to_string(cfg.exp_steps)},
  };
}

std::vector<std::pair<std::string, std::string>> genspec_to_kv(const GenSpec& spec) {
  return {
      {"classes", std::to_string(spec.classes)},
      {"per_class", std::to_string(spec.per_class)},
      {"size", std::to_string(spec.size)},
      {"seed", std::to_string(spec.seed)},
      {"deform_amplitude", fmt_g(spec.deform_amplitude)},
      {"noise_std", fmt_g(spec.noise_std)},
  };
}

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "eta0")
    cfg.eta0 = std::stod(value);
  else if (key == "epochs_corld")
    cfg.epochs_corld = std::stoi(value);
  else if (key == "epochs_clf")
    cfg.epochs_clf = std::stoi(value);
  else if (key == "eps_corld")
    cfg.eps_corld = std::stod(value);
  else if (key == "eps_clf")
    cfg.eps_clf = std::stod(value);
  else if (key == "batch_size")
    cfg.batch_size = std::stoi(value);
  else if (key == "seed")
    cfg.seed = std::stoull(value);
  else if (key == "sigma")
    cfg.weights.sigma = std::stod(value);
  else if (key == "delta")
    cfg.weights.delta = std::stod(value);
  else if (key == "beta")
    cfg.weights.beta = std::stod(value);
  else if (key == "gamma")
    cfg.weights.gamma = std::stod(value);
  else if (key == "tau")
    cfg.weights.tau = std::stod(value);
  else if (key == "weight_decay")
    cfg.weights.weight_decay = std::stod(value);
  else if (key == "candidate_set") {
    if (value == "all_others")
      cfg.candidate_set = CandidateSet::AllOthers;
    else if (value == "different_class_only")
      cfg.candidate_set = CandidateSet::DifferentClassOnly;
    else
      fail_invalid("config", "bad candidate_set '" + value + "'");
  } else if (key == "fuse_source") {
    if (value == "projected")
      cfg.fuse_source = FuseSource::Projected;
    else if (value == "latent")
      cfg.fuse_source = FuseSource::Latent;
    else
      fail_invalid("config", "bad fuse_source '" + value + "'");
  } else if (key == "finetune_shape")
    cfg.finetune_shape = parse_bool(value, key);
  else if (key == "template_mode") {
    if (value == "multi")
      cfg.template_mode = TemplateMode::Multi;
    else if (value == "single")
      cfg.template_mode = TemplateMode::Single;
    else
      fail_invalid("config", "bad template_mode '" + value + "'");
  } else if (key == "contrastive_on")
    cfg.contrastive_on = parse_bool(value, key);
  else if (key == "template_in_input")
    cfg.template_in_input = parse_bool(value, key);
  else if (key == "float_mode") {
    if (value == "f32")
      cfg.float_mode = Dtype::F32;
    else if (value == "f64")
      cfg.float_mode = Dtype::F64;
    else
      fail_invalid("config", "bad float_mode '" + value + "'");
  } else if (key == "exp_steps")
    cfg.exp_steps = std::stoi(value);
  else
    fail_invalid("config", "unknown config key '" + key + "'");
}

void load_train_config(const std::string& path, TrainConfig& cfg) {
  std::ifstream is(path);
  if (!is) fail("config", "cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != kConfigVersion)
    fail("config", path + ": expected '" + kConfigVersion + "', got '" + line + "'");
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("config", path + ": malformed line '" + line + "'");
    apply_config_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  validate_config(cfg);
}

void save_train_config(const std::string& path, const TrainConfig& cfg) {
  std::ofstream os(path);
  if (!os) fail("config", "cannot open " + path + " for writing");
  os << kConfigVersion << "\n";
  for (const auto& [k, v] : config_to_kv(cfg)) os << k << "=" << v << "\n";
}

void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::vector<std::pair<std::string, std::string>>& config,
                        const std::vector<std::string>& artifact_files) {
  std::ofstream os(dir + "/manifest.txt");
  if (!os) fail("config", "cannot open " + dir + "/manifest.txt for writing");
  os << kRunVersion << "\n";
  os << "command=" << command << "\n";
  for (const auto& [k, v] : config) os << "cfg." << k << "=" << v << "\n";
  for (const std::string& f : artifact_files) {
    char crc[16];
    std::snprintf(crc, sizeof(crc), "%08x", crc32_file(dir + "/" + f));
    os << "artifact." << f << "=" << crc << "\n";
  }
}

}  // namespace corld
