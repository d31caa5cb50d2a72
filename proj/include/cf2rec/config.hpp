#pragma once

// Run configuration: defaults < JSON config file < CF2REC_* environment
// variables < command-line flags. Every key is range-checked on load and
// unknown keys are rejected.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/contrastive.hpp"
#include "cf2rec/data.hpp"
#include "cf2rec/env.hpp"
#include "cf2rec/neural.hpp"
#include "cf2rec/oracle.hpp"
#include "cf2rec/policy.hpp"

namespace cf2rec {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kEnvPrefix = "CF2REC_";

struct RunConfig {
  // data
  std::string dataset = "synthetic";
  std::string input;  // raw interaction TSV for prepare; empty means synthetic data
  std::size_t min_len = 2;
  std::size_t min_item_freq = 0;
  std::optional<std::size_t> max_item_freq = 100;
  std::string split_scheme = "last_session_per_user";
  std::size_t synth_items = 50;
  std::size_t synth_sessions = 200;
  std::size_t synth_min_len = 5;
  std::size_t synth_max_len = 10;
  std::size_t synth_rules = 8;
  double synth_p_trigger = 0.9;
  double synth_noise = 0.05;

  // recommender
  std::string recommender = "markov";
  std::size_t d = 16;
  double rho = 0.8;
  double alpha = 0.1;
  std::size_t rec_epochs = 30;
  std::size_t rec_batch_size = 32;
  double rec_lr = 0.5;

  // explainer
  std::size_t k = 10;
  std::vector<std::size_t> report_ks{5, 10, 20};
  double gamma = 0.95;
  double policy_lr = 1e-3;
  std::optional<std::size_t> max_episodes;  // unset: 50 x number of sessions
  std::size_t policy_batch_size = 32;
  std::size_t reward_window = 100;
  double reward_tol = 0.0;
  double param_tol = 0.0;
  bool baseline = true;
  std::size_t hidden_dim = 0;
  bool step_features = true;
  std::string explain_split = "all";

  // evaluation
  std::size_t oracle_max_len = kDefaultOracleMaxLen;
  double keep_prob = 0.5;

  // fine-tuning
  double lambda = 0.5;
  double temperature = 1.0;
  std::string contrastive_mode = "both";
  std::size_t ft_epochs = 5;
  std::size_t ft_batch_size = 32;
  double ft_lr = 0.1;

  std::uint64_t seed = 0;
  std::size_t workers = default_workers();

  nlohmann::json to_json() const;
  void set(const std::string& key, const nlohmann::json& value);

  EnvConfig env_config() const {
    EnvConfig e;
    e.k = k;
    e.step_features = step_features;
    return e;
  }
  TrainerConfig trainer_config() const {
    TrainerConfig t;
    t.gamma = gamma;
    t.learning_rate = policy_lr;
    t.max_episodes = max_episodes;
    t.batch_size = policy_batch_size;
    t.reward_window = reward_window;
    t.reward_tol = reward_tol;
    t.param_tol = param_tol;
    t.baseline = baseline;
    t.hidden_dim = hidden_dim;
    t.seed = derive_seed(seed, "train-explainer");
    t.workers = workers;
    return t;
  }
  RecTrainConfig rec_train_config() const {
    return {rec_epochs, rec_batch_size, rec_lr, derive_seed(seed, "train-rec")};
  }
  FinetuneConfig finetune_config() const {
    FinetuneConfig f;
    f.lambda = lambda;
    f.temperature = temperature;
    f.mode = parse_contrastive_mode(contrastive_mode);
    f.batch_size = ft_batch_size;
    f.epochs = ft_epochs;
    f.learning_rate = ft_lr;
    f.seed = derive_seed(seed, "finetune");
    return f;
  }
  FilterConfig filter_config() const { return {min_len, min_item_freq, max_item_freq}; }
  SynthSpec synth_spec() const {
    SynthSpec s;
    s.n_items = synth_items;
    s.n_sessions = synth_sessions;
    s.min_len = synth_min_len;
    s.max_len = synth_max_len;
    s.n_rules = synth_rules;
    s.p_trigger = synth_p_trigger;
    s.noise = synth_noise;
    s.seed = derive_seed(seed, "synth");
    return s;
  }
};

namespace detail {

struct ConfigKey {
  const char* name;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

template <typename T>
T as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has an invalid value: " + v.dump());
  }
}

inline void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError("config key '" + key + "' must be " + rule);
}

#define CF2REC_KEY(field, check, rule)                             \
  ConfigKey {                                                      \
    #field,                                                        \
        [](RunConfig& c, const nlohmann::json& v) {                \
          auto x = as<decltype(RunConfig::field)>(v, #field);      \
          require(check, #field, rule);                            \
          c.field = x;                                             \
        },                                                         \
        [](const RunConfig& c) { return nlohmann::json(c.field); } \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      CF2REC_KEY(dataset, !x.empty(), "non-empty"),
      CF2REC_KEY(input, true, "a path"),
      CF2REC_KEY(min_len, x >= 2, ">= 2"),
      CF2REC_KEY(min_item_freq, true, ">= 0"),
      ConfigKey{
          "max_item_freq",
          [](RunConfig& c, const nlohmann::json& v) {
            if (v.is_null()) {
              c.max_item_freq.reset();
              return;
            }
            c.max_item_freq = as<std::size_t>(v, "max_item_freq");
          },
          [](const RunConfig& c) { return c.max_item_freq ? nlohmann::json(*c.max_item_freq) : nlohmann::json(); }},
      CF2REC_KEY(split_scheme, x == "last_session_per_user" || x == "ratio", "last_session_per_user or ratio"),
      CF2REC_KEY(synth_items, x >= 3, ">= 3"),
      CF2REC_KEY(synth_sessions, x >= 1, ">= 1"),
      CF2REC_KEY(synth_min_len, x >= 2, ">= 2"),
      CF2REC_KEY(synth_max_len, x >= 2 && x <= 62, "in [2, 62]"),
      CF2REC_KEY(synth_rules, true, ">= 0"),
      CF2REC_KEY(synth_p_trigger, x > 0.5 && x <= 1.0, "in (0.5, 1]"),
      CF2REC_KEY(synth_noise, x >= 0.0 && x <= 1.0, "in [0, 1]"),
      CF2REC_KEY(recommender, x == "markov" || x == "neural", "markov or neural"),
      CF2REC_KEY(d, x >= 1, ">= 1"),
      CF2REC_KEY(rho, x > 0.0 && x <= 1.0, "in (0, 1]"),
      CF2REC_KEY(alpha, x >= 0.0, ">= 0"),
      CF2REC_KEY(rec_epochs, true, ">= 0"),
      CF2REC_KEY(rec_batch_size, x >= 1, ">= 1"),
      CF2REC_KEY(rec_lr, x > 0.0, "> 0"),
      CF2REC_KEY(k, x >= 1, ">= 1"),
      ConfigKey{"report_ks",
                [](RunConfig& c, const nlohmann::json& v) {
                  require(v.is_array() && !v.empty(), "report_ks", "a non-empty list of positive integers");
                  std::vector<std::size_t> ks;
                  for (const auto& e : v) {
                    ks.push_back(as<std::size_t>(e, "report_ks"));
                    require(ks.back() >= 1, "report_ks", "a non-empty list of positive integers");
                  }
                  c.report_ks = ks;
                },
                [](const RunConfig& c) { return nlohmann::json(c.report_ks); }},
      CF2REC_KEY(gamma, x >= 0.0 && x <= 1.0, "in [0, 1]"),
      CF2REC_KEY(policy_lr, x > 0.0, "> 0"),
      ConfigKey{"max_episodes",
                [](RunConfig& c, const nlohmann::json& v) {
                  if (v.is_null()) {
                    c.max_episodes.reset();
                    return;
                  }
                  c.max_episodes = as<std::size_t>(v, "max_episodes");
                },
                [](const RunConfig& c) { return c.max_episodes ? nlohmann::json(*c.max_episodes) : nlohmann::json(); }},
      CF2REC_KEY(policy_batch_size, x >= 1, ">= 1"),
      CF2REC_KEY(reward_window, x >= 1, ">= 1"),
      CF2REC_KEY(reward_tol, x >= 0.0, ">= 0"),
      CF2REC_KEY(param_tol, x >= 0.0, ">= 0"),
      CF2REC_KEY(baseline, true, "a boolean"),
      CF2REC_KEY(hidden_dim, true, ">= 0"),
      CF2REC_KEY(step_features, true, "a boolean"),
      CF2REC_KEY(explain_split, x == "train" || x == "valid" || x == "test" || x == "all", "train, valid, test or all"),
      CF2REC_KEY(oracle_max_len, x >= 1 && x <= 30, "in [1, 30]"),
      CF2REC_KEY(keep_prob, x > 0.0 && x < 1.0, "in (0, 1)"),
      CF2REC_KEY(lambda, x >= 0.0, ">= 0"),
      CF2REC_KEY(temperature, x > 0.0, "> 0"),
      CF2REC_KEY(contrastive_mode, x == "both" || x == "pos_only" || x == "neg_only", "both, pos_only or neg_only"),
      CF2REC_KEY(ft_epochs, true, ">= 0"),
      CF2REC_KEY(ft_batch_size, x >= 2, ">= 2"),
      CF2REC_KEY(ft_lr, x > 0.0, "> 0"),
      CF2REC_KEY(seed, true, "a non-negative integer"),
      CF2REC_KEY(workers, x >= 1, ">= 1"),
  };
  return keys;
}

#undef CF2REC_KEY

}  // namespace detail

inline void RunConfig::set(const std::string& key, const nlohmann::json& value) {
  for (const auto& k : detail::config_keys()) {
    if (key == k.name) {
      k.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : detail::config_keys()) j[k.name] = k.get(*this);
  return j;
}

inline void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) cfg.set(key, value);
}

/// CF2REC_<KEY> overrides, e.g. CF2REC_POLICY_LR=0.01. Values are parsed as
/// JSON when possible and taken as strings otherwise.
inline void apply_env_overrides(RunConfig& cfg, char** envp) {
  if (!envp) return;
  const std::string prefix = kEnvPrefix;
  for (char** e = envp; *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const std::string raw = entry.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    // keys that hold strings take the raw text, so CF2REC_DATASET=2024 stays a string
    const auto current = cfg.to_json();
    if (value.is_discarded() || (current.contains(key) && current.at(key).is_string())) value = raw;
    cfg.set(key, value);
  }
}

/// Constraints that span several keys; run after every source is applied.
inline void validate(const RunConfig& cfg) {
  if (cfg.synth_min_len > cfg.synth_max_len) throw ConfigError("synth_min_len must not exceed synth_max_len");
  if (2 * cfg.synth_rules >= cfg.synth_items) throw ConfigError("synth_rules must be below synth_items / 2");
}

}  // namespace cf2rec
