// Command-line driver: one subcommand per pipeline stage plus `pipeline`.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 missing upstream
// artifact, 1 anything else.

#include <CLI11.hpp>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cf2rec/stages.hpp"

extern char** environ;

namespace {

using cf2rec::RunConfig;
using cf2rec::Workspace;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = "out";
  std::string input;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_input) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--workers", f.workers, "Worker threads (default: available cores)");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--set", f.sets, "Config override KEY=VALUE (repeatable)");
  if (with_input) cmd->add_option("--input", f.input, "Raw interaction log (user<TAB>item<TAB>unix_ts)");
}

// defaults < config file < environment < flags
RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) {
    auto is = cf2rec::open_input(f.config_path);
    auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw cf2rec::ConfigError("config file " + f.config_path + " is not valid JSON");
    cf2rec::apply_config_json(cfg, j);
  }
  cf2rec::apply_env_overrides(cfg, environ);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cf2rec::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    const auto key = kv.substr(0, eq);
    const auto raw = kv.substr(eq + 1);
    auto value = nlohmann::json::parse(raw, nullptr, false);
    const auto current = cfg.to_json();
    if (value.is_discarded() || (current.contains(key) && current.at(key).is_string())) value = raw;
    cfg.set(key, value);
  }
  if (f.seed) cfg.set("seed", *f.seed);
  if (f.workers) cfg.set("workers", *f.workers);
  if (!f.input.empty()) cfg.set("input", f.input);
  cf2rec::validate(cfg);
  return cfg;
}

int run(const std::function<void(const Workspace&)>& stage, const CommonFlags& flags) {
  try {
    const Workspace ws(flags.out, resolve(flags), std::cout);
    stage(ws);
    return 0;
  } catch (const cf2rec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cf2rec::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return 4;
  } catch (const cf2rec::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for session-based recommenders"};
  app.require_subcommand(1);

  struct Stage {
    const char* name;
    const char* help;
    void (*fn)(const Workspace&);
    bool with_input;
  };
  const std::vector<Stage> stages = {
      {"prepare", "Sessionize, filter and split a raw interaction log", cf2rec::cmd_prepare, true},
      {"synth", "Generate the planted synthetic dataset", cf2rec::cmd_synth, false},
      {"train-rec", "Fit the recommender", cf2rec::cmd_train_rec, false},
      {"train-explainer", "Train the explanation policy", cf2rec::cmd_train_explainer, false},
      {"explain", "Explain sessions with the trained policy", cf2rec::cmd_explain, false},
      {"oracle", "Exact minimum explanations for short sessions", cf2rec::cmd_oracle, false},
      {"eval", "Ranking and explanation metrics", cf2rec::cmd_eval, false},
      {"finetune", "Contrastive fine-tuning with explanation views", cf2rec::cmd_finetune, false},
      {"report", "Join metric files into report.csv", cf2rec::cmd_report, false},
      {"pipeline", "Run every stage in order", cf2rec::cmd_pipeline, true},
  };

  CommonFlags flags;
  int code = 0;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags, s.with_input);
    cmd->callback([&code, &flags, fn = s.fn] { code = run(fn, flags); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return code;
}
