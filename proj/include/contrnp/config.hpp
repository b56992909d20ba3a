#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "contrnp/error.hpp"
#include "contrnp/trainer.hpp"

namespace contrnp {

/// Everything a CLI run needs: training hyperparameters, the dataset and
/// evaluation options.
struct RunConfig {
  TrainConfig train;
  std::string data;  // CSV path; empty means synthetic
  int synth_classes = 4;
  std::size_t synth_segments = 50;  // per class
  std::size_t synth_window = 256;
  double synth_noise = 0.1;
  std::uint64_t synth_seed = 0;
  std::string out = "run";
  std::size_t eval_views = 2;
  double label_fraction = 0.8;
};

namespace detail {

struct ConfigField {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
std::string format_value(const T& v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
T parse_value(const std::string& s) {
  if constexpr (std::is_same_v<T, std::string>) return s;
  std::istringstream is(s);
  T v{};
  is >> v;
  if (!is || is.peek() != std::char_traits<char>::eof()) throw UsageError("invalid value '" + s + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (!s.empty() && s.front() == '-') throw UsageError("invalid value '" + s + "' (must be >= 0)");
  }
  return v;
}

template <class T, class Get>
ConfigField field(Get member) {
  return {[member](RunConfig& c, const std::string& s) { member(c) = parse_value<T>(s); },
          [member](const RunConfig& c) { return format_value(member(const_cast<RunConfig&>(c))); }};
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    f["seed"] = field<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.seed; });
    f["window_size"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.window_size; });
    f["stride"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.stride; });
    f["K_per_batch"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_segments; });
    f["M"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.views; });
    f["tau"] = field<double>([](RunConfig& c) -> auto& { return c.train.contrastive.tau; });
    f["lambda"] = field<double>([](RunConfig& c) -> auto& { return c.train.lambda; });
    f["contrastive_mode"] = {
        [](RunConfig& c, const std::string& s) {
          if (s == "exp_sim") {
            c.train.contrastive.mode = ContrastiveMode::kExpSim;
          } else if (s == "literal") {
            c.train.contrastive.mode = ContrastiveMode::kLiteral;
          } else {
            throw UsageError("invalid value '" + s + "' (expected exp_sim or literal)");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.train.contrastive.mode == ContrastiveMode::kExpSim ? "exp_sim" : "literal");
        }};
    f["a"] = field<double>([](RunConfig& c) -> auto& { return c.train.sampling.a; });
    f["b"] = field<double>([](RunConfig& c) -> auto& { return c.train.sampling.b; });
    f["n_context_min"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.sampling.n_context_min; });
    f["n_context_max"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.sampling.n_context_max; });
    f["grid_size"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.grid_size; });
    f["grid_margin"] = field<double>([](RunConfig& c) -> auto& { return c.train.model.grid_margin; });
    f["encoding_size"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.encoding_size; });
    f["cnn_layers"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.cnn_layers; });
    f["cnn_width"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.cnn_width; });
    f["kernel_width"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.kernel_width; });
    f["decoder_hidden"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.model.decoder_hidden; });
    f["sigma_min"] = field<double>([](RunConfig& c) -> auto& { return c.train.model.sigma_min; });
    f["learning_rate"] = field<double>([](RunConfig& c) -> auto& { return c.train.adam.learning_rate; });
    f["beta1"] = field<double>([](RunConfig& c) -> auto& { return c.train.adam.beta1; });
    f["beta2"] = field<double>([](RunConfig& c) -> auto& { return c.train.adam.beta2; });
    f["eps"] = field<double>([](RunConfig& c) -> auto& { return c.train.adam.eps; });
    f["clip_norm"] = field<double>([](RunConfig& c) -> auto& { return c.train.clip_norm; });
    f["epochs"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.epochs; });
    f["max_steps"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.max_steps; });
    f["checkpoint_every"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.train.checkpoint_every; });
    f["data"] = field<std::string>([](RunConfig& c) -> auto& { return c.data; });
    f["synth_classes"] = field<int>([](RunConfig& c) -> auto& { return c.synth_classes; });
    f["synth_segments"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.synth_segments; });
    f["synth_window"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.synth_window; });
    f["synth_noise"] = field<double>([](RunConfig& c) -> auto& { return c.synth_noise; });
    f["synth_seed"] = field<std::uint64_t>([](RunConfig& c) -> auto& { return c.synth_seed; });
    f["out"] = field<std::string>([](RunConfig& c) -> auto& { return c.out; });
    f["eval_views"] = field<std::size_t>([](RunConfig& c) -> auto& { return c.eval_views; });
    f["label_fraction"] = field<double>([](RunConfig& c) -> auto& { return c.label_fraction; });
    return f;
  }();
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one key; throws UsageError for unknown keys or bad values.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(key);
  if (it == fields.end()) throw UsageError("unknown config key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const UsageError& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

/// Parses `key = value` lines; '#' starts a comment. Unknown or repeated
/// keys are rejected with the offending line number.
inline RunConfig parse_run_config(const std::string& text, const std::string& source,
                                  RunConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw UsageError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const UsageError& e) {
      throw UsageError(where + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

/// All keys with their resolved values, in the format parse_run_config reads.
inline std::string config_text(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, f] : detail::config_fields()) os << key << " = " << f.get(cfg) << '\n';
  return os.str();
}

}  // namespace contrnp
