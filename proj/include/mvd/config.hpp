#ifndef MVD_CONFIG_HPP_
#define MVD_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvd/common.hpp"
#include "mvd/losses.hpp"
#include "mvd/model.hpp"
#include "mvd/sha256.hpp"
#include "mvd/synth.hpp"
#include "mvd/train.hpp"

namespace mvd {

// Resolved run configuration. One root seed feeds every stage through
// labeled derivation; file keys are overridden by CLI "key=value" pairs,
// and MVD_OUT_DIR / MVD_THREADS are the only environment overrides.
struct RunConfig {
  uint64_t seed = 1;

  ModelConfig model;
  TrainConfig train;

  int vocab_size = 512;
  int min_pair_count = 2;

  std::array<double, 3> split_ratios = {8, 1, 1};

  double extend_distill_weight = 1.0;
  double extend_lr = 0.0;  // 0: inherit train.lr
  int extend_epochs = 0;   // 0: inherit train.epochs

  SynthConfig synth;

  std::string dataset_path;
  std::string split_path;
  std::string out_dir = "out";
  int threads = 1;

  std::string variant = "mvd";  // mvd | binary | ce | focal | lace | freeze

  // Normalized key=value text of everything above; digested into manifests.
  std::string resolved_text;
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config: bad numeric value for key " + key);
  }
}

inline int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw Error("config: bad integer value for key " + key);
  }
}

}  // namespace detail

inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  using detail::to_double;
  using detail::to_int;
  if (key == "seed") cfg.seed = static_cast<uint64_t>(to_int(key, value));
  else if (key == "variant") cfg.variant = value;

  else if (key == "model.max_len") cfg.model.max_len = static_cast<int>(to_int(key, value));
  else if (key == "model.hidden_dim") cfg.model.hidden_dim = static_cast<int>(to_int(key, value));
  else if (key == "model.num_layers") cfg.model.num_layers = static_cast<int>(to_int(key, value));
  else if (key == "model.num_heads") cfg.model.num_heads = static_cast<int>(to_int(key, value));
  else if (key == "model.ffn_dim") cfg.model.ffn_dim = static_cast<int>(to_int(key, value));
  else if (key == "model.dropout") cfg.model.dropout_rate = to_double(key, value);

  else if (key == "tokenizer.vocab_size") cfg.vocab_size = static_cast<int>(to_int(key, value));
  else if (key == "tokenizer.min_pair_count") cfg.min_pair_count = static_cast<int>(to_int(key, value));

  else if (key == "train.lr") cfg.train.initial_lr = to_double(key, value);
  else if (key == "train.min_lr") cfg.train.min_lr = to_double(key, value);
  else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(to_int(key, value));
  else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(to_int(key, value));
  else if (key == "train.weight_decay") cfg.train.weight_decay = to_double(key, value);
  else if (key == "train.beta1") cfg.train.adam_beta1 = to_double(key, value);
  else if (key == "train.beta2") cfg.train.adam_beta2 = to_double(key, value);
  else if (key == "train.epsilon") cfg.train.adam_epsilon = to_double(key, value);
  else if (key == "train.grad_clip") cfg.train.grad_clip = to_double(key, value);

  else if (key == "loss.gamma") cfg.train.loss.gamma = to_double(key, value);
  else if (key == "loss.tau") cfg.train.loss.tau = to_double(key, value);
  else if (key == "loss.distill_mode") cfg.train.loss.distill_mode = distill_mode_from(value);

  else if (key == "split.ratios") {
    std::stringstream ss(value);
    std::string part;
    std::vector<double> ratios;
    while (std::getline(ss, part, ',')) ratios.push_back(to_double(key, part));
    if (ratios.size() != 3) throw Error("config: split.ratios needs three numbers");
    cfg.split_ratios = {ratios[0], ratios[1], ratios[2]};
  }

  else if (key == "extend.distill_weight") cfg.extend_distill_weight = to_double(key, value);
  else if (key == "extend.lr") cfg.extend_lr = to_double(key, value);
  else if (key == "extend.epochs") cfg.extend_epochs = static_cast<int>(to_int(key, value));

  else if (key == "synth.languages") cfg.synth.num_languages = static_cast<int>(to_int(key, value));
  else if (key == "synth.functions_per_language") cfg.synth.functions_per_language = static_cast<int>(to_int(key, value));
  else if (key == "synth.vulnerable_fraction") cfg.synth.vulnerable_fraction = to_double(key, value);
  else if (key == "synth.hard_negative_fraction") cfg.synth.hard_negative_fraction = to_double(key, value);
  else if (key == "synth.confuser_fraction") cfg.synth.confuser_fraction = to_double(key, value);
  else if (key == "synth.min_statements") cfg.synth.min_statements = static_cast<int>(to_int(key, value));
  else if (key == "synth.max_statements") cfg.synth.max_statements = static_cast<int>(to_int(key, value));

  else if (key == "data.dataset") cfg.dataset_path = value;
  else if (key == "data.split") cfg.split_path = value;
  else if (key == "io.out_dir") cfg.out_dir = value;

  else throw Error("config: unknown key " + key);
}

// Applies the variant selector onto loss and mode flags.
inline void apply_variant(RunConfig& cfg) {
  cfg.train.binary_mode = false;
  cfg.train.freeze_encoder = false;
  if (cfg.variant == "mvd") {
    cfg.train.loss.variant = LossVariant::FolaAdjusted;
  } else if (cfg.variant == "binary") {
    cfg.train.loss.variant = LossVariant::FolaAdjusted;
    cfg.train.binary_mode = true;
  } else if (cfg.variant == "ce") {
    cfg.train.loss.variant = LossVariant::Ce;
    cfg.train.loss.gamma = 0;
    cfg.train.loss.tau = 0;
  } else if (cfg.variant == "focal") {
    cfg.train.loss.variant = LossVariant::Focal;
    cfg.train.loss.tau = 0;
  } else if (cfg.variant == "lace") {
    cfg.train.loss.variant = LossVariant::Lace;
    cfg.train.loss.gamma = 0;
  } else if (cfg.variant == "freeze") {
    cfg.train.loss.variant = LossVariant::FolaAdjusted;
    cfg.train.freeze_encoder = true;
  } else {
    throw Error("config: unknown variant " + cfg.variant);
  }
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "seed = " << cfg.seed << '\n';
  out << "variant = " << cfg.variant << '\n';
  out << "model.max_len = " << cfg.model.max_len << '\n';
  out << "model.hidden_dim = " << cfg.model.hidden_dim << '\n';
  out << "model.num_layers = " << cfg.model.num_layers << '\n';
  out << "model.num_heads = " << cfg.model.num_heads << '\n';
  out << "model.ffn_dim = " << cfg.model.ffn_dim << '\n';
  out << "model.dropout = " << cfg.model.dropout_rate << '\n';
  out << "tokenizer.vocab_size = " << cfg.vocab_size << '\n';
  out << "tokenizer.min_pair_count = " << cfg.min_pair_count << '\n';
  out << "train.lr = " << cfg.train.initial_lr << '\n';
  out << "train.min_lr = " << cfg.train.min_lr << '\n';
  out << "train.epochs = " << cfg.train.epochs << '\n';
  out << "train.batch_size = " << cfg.train.batch_size << '\n';
  out << "train.weight_decay = " << cfg.train.weight_decay << '\n';
  out << "train.beta1 = " << cfg.train.adam_beta1 << '\n';
  out << "train.beta2 = " << cfg.train.adam_beta2 << '\n';
  out << "train.epsilon = " << cfg.train.adam_epsilon << '\n';
  out << "train.grad_clip = " << cfg.train.grad_clip << '\n';
  out << "loss.gamma = " << cfg.train.loss.gamma << '\n';
  out << "loss.tau = " << cfg.train.loss.tau << '\n';
  out << "loss.distill_mode = " << distill_mode_name(cfg.train.loss.distill_mode) << '\n';
  out << "split.ratios = " << cfg.split_ratios[0] << ',' << cfg.split_ratios[1] << ','
      << cfg.split_ratios[2] << '\n';
  out << "extend.distill_weight = " << cfg.extend_distill_weight << '\n';
  out << "extend.lr = " << cfg.extend_lr << '\n';
  out << "extend.epochs = " << cfg.extend_epochs << '\n';
  out << "synth.languages = " << cfg.synth.num_languages << '\n';
  out << "synth.functions_per_language = " << cfg.synth.functions_per_language << '\n';
  out << "synth.vulnerable_fraction = " << cfg.synth.vulnerable_fraction << '\n';
  out << "synth.hard_negative_fraction = " << cfg.synth.hard_negative_fraction << '\n';
  out << "synth.confuser_fraction = " << cfg.synth.confuser_fraction << '\n';
  out << "synth.min_statements = " << cfg.synth.min_statements << '\n';
  out << "synth.max_statements = " << cfg.synth.max_statements << '\n';
  out << "data.dataset = " << cfg.dataset_path << '\n';
  out << "data.split = " << cfg.split_path << '\n';
  out << "io.out_dir = " << cfg.out_dir << '\n';
  return out.str();
}

// Parses an optional config file, then applies key=value overrides in
// order, then the environment overrides, then derives stage seeds.
inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read config file: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string t = detail::trim_copy(line);
      if (t.empty() || t[0] == '#') continue;
      size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw Error(path + ":" + std::to_string(line_no) + ": expected key = value");
      apply_config_key(cfg, detail::trim_copy(t.substr(0, eq)),
                       detail::trim_copy(t.substr(eq + 1)));
    }
  }
  for (const auto& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) throw Error("override needs key=value: " + kv);
    apply_config_key(cfg, detail::trim_copy(kv.substr(0, eq)),
                     detail::trim_copy(kv.substr(eq + 1)));
  }
  if (const char* env = std::getenv("MVD_OUT_DIR")) {
    if (*env) cfg.out_dir = env;
  }
  if (const char* env = std::getenv("MVD_THREADS")) {
    if (*env) cfg.threads = static_cast<int>(detail::to_int("MVD_THREADS", env));
  }
  apply_variant(cfg);
  cfg.model.seed = derive_seed(cfg.seed, "model");
  cfg.train.seed = derive_seed(cfg.seed, "train");
  cfg.synth.seed = derive_seed(cfg.seed, "synth");
  cfg.resolved_text = serialize_config(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::map<std::string, std::string> input_digests;   // path -> sha256
  std::map<std::string, std::string> output_digests;  // path -> sha256
  uint64_t seed = 0;
  std::map<std::string, double> timings_sec;
  std::map<std::string, std::string> notes;

  void add_input(const std::string& path) { input_digests[path] = sha256_file(path); }
  void add_output(const std::string& path) { output_digests[path] = sha256_file(path); }

  void write(const std::string& path) const {
    nlohmann::json j{{"command", command},
                     {"config_digest", config_digest},
                     {"seed", seed},
                     {"inputs", input_digests},
                     {"outputs", output_digests},
                     {"timings_sec", timings_sec},
                     {"notes", notes}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
  }
};

}  // namespace mvd

#endif  // MVD_CONFIG_HPP_
