#pragma once

// Pipeline stages over an output directory. Each stage reads the artifacts of
// its upstream stages, writes its own, and echoes the resolved config.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cf2rec/checkpoint.hpp"
#include "cf2rec/config.hpp"
#include "cf2rec/contrastive.hpp"
#include "cf2rec/data.hpp"
#include "cf2rec/io.hpp"
#include "cf2rec/markov.hpp"
#include "cf2rec/metrics.hpp"
#include "cf2rec/neural.hpp"
#include "cf2rec/oracle.hpp"
#include "cf2rec/policy.hpp"

namespace cf2rec {

/// An upstream artifact is missing.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace files {
inline constexpr const char* kTrain = "train.jsonl";
inline constexpr const char* kValid = "valid.jsonl";
inline constexpr const char* kTest = "test.jsonl";
inline constexpr const char* kCatalog = "catalog.tsv";
inline constexpr const char* kDataset = "dataset.json";
inline constexpr const char* kRecCkpt = "rec.ckpt";
inline constexpr const char* kRecLoss = "rec_train_loss.csv";
inline constexpr const char* kPolicyCkpt = "policy.ckpt";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kExplanations = "explanations.jsonl";
inline constexpr const char* kOracle = "oracle.csv";
inline constexpr const char* kRecMetrics = "rec_metrics.csv";
inline constexpr const char* kExplMetrics = "expl_metrics.csv";
inline constexpr const char* kMetricsJson = "metrics.json";
inline constexpr const char* kFinetunedCkpt = "finetuned.ckpt";
inline constexpr const char* kFinetuneLoss = "finetune_loss.csv";
inline constexpr const char* kFinetuneCompare = "finetune_compare.csv";
inline constexpr const char* kReport = "report.csv";
}  // namespace files

class Workspace {
 public:
  Workspace(std::filesystem::path dir, RunConfig cfg, std::ostream& log)
      : dir_(std::move(dir)), cfg_(std::move(cfg)), log_(&log) {
    std::filesystem::create_directories(dir_);
  }

  const RunConfig& config() const { return cfg_; }
  std::ostream& log() const { return *log_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string require(const std::string& name, const std::string& producer) const {
    const auto p = path(name);
    if (!std::filesystem::exists(p)) {
      throw DependencyError("missing " + p + "; run '" + producer + "' first");
    }
    return p;
  }

  void echo_config(const std::string& stage) const {
    auto os = open_output(path(stage + ".config.json"));
    os << cfg_.to_json().dump(2) << '\n';
  }

  Catalog catalog() const {
    auto is = open_input(require(files::kCatalog, "prepare"));
    return read_catalog_tsv(is);
  }
  std::vector<Session> sessions(const std::string& name) const {
    auto is = open_input(require(name, "prepare"));
    return read_sessions_jsonl(is);
  }
  std::unique_ptr<Recommender> recommender(const std::string& name = files::kRecCkpt) const {
    return recommender_from_checkpoint(load_checkpoint(require(name, "train-rec")), catalog());
  }

 private:
  std::filesystem::path dir_;
  RunConfig cfg_;
  std::ostream* log_;
};

namespace detail {

inline void write_split(const Workspace& ws, const DatasetSplit& split, nlohmann::json extra) {
  for (auto [name, part] : {std::pair{files::kTrain, &split.train}, std::pair{files::kValid, &split.valid},
                            std::pair{files::kTest, &split.test}}) {
    auto os = open_output(ws.path(name));
    write_sessions_jsonl(os, *part);
  }
  {
    auto os = open_output(ws.path(files::kCatalog));
    write_catalog_tsv(os, split.catalog);
  }
  extra["stats"] = {{"n_train", split.stats.n_train},
                    {"n_valid", split.stats.n_valid},
                    {"n_test", split.stats.n_test},
                    {"n_items", split.stats.n_items},
                    {"avg_train_len", split.stats.avg_train_len}};
  auto os = open_output(ws.path(files::kDataset));
  os << extra.dump(2) << '\n';
  ws.log() << "sessions: train=" << split.stats.n_train << " valid=" << split.stats.n_valid
           << " test=" << split.stats.n_test << " items=" << split.stats.n_items
           << " avg_train_len=" << fmt_num(split.stats.avg_train_len, 6) << '\n';
}

inline std::vector<Session> explain_sessions(const Workspace& ws) {
  const auto& which = ws.config().explain_split;
  std::vector<Session> out;
  for (auto [name, tag] :
       {std::pair{files::kTrain, "train"}, std::pair{files::kValid, "valid"}, std::pair{files::kTest, "test"}}) {
    if (which != "all" && which != tag) continue;
    auto part = ws.sessions(name);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

inline Checkpoint policy_checkpoint(const PolicyNet& policy, const Recommender& rec, const RunConfig& cfg) {
  Checkpoint c;
  c.meta["kind"] = "policy";
  c.meta["catalog"] = std::to_string(rec.catalog().size());
  c.meta["d"] = std::to_string(rec.embed_dim());
  c.meta["rho"] = "0";
  c.meta["alpha"] = "0";
  c.meta["hidden"] = std::to_string(policy.hidden_dim());
  c.meta["step_features"] = cfg.step_features ? "1" : "0";
  c.meta["k"] = std::to_string(cfg.k);
  c.tensors = policy.theta;
  return c;
}

inline PolicyNet policy_from_checkpoint(const Checkpoint& c, const Recommender& rec, const RunConfig& cfg) {
  if (c.get("kind") != "policy") throw DataError("not a policy checkpoint");
  if (std::stoul(c.get("d")) != rec.embed_dim() || std::stoul(c.get("catalog")) != rec.catalog().size()) {
    throw DependencyError("policy checkpoint does not match the recommender; rerun train-explainer");
  }
  if ((c.get("step_features") == "1") != cfg.step_features || std::stoul(c.get("k")) != cfg.k) {
    throw ConfigError("policy was trained with different k or step_features settings");
  }
  return PolicyNet{c.tensors};
}

inline std::string join_ks(const std::vector<std::size_t>& ks) {
  std::string out;
  for (auto k : ks) out += ",hr@" + std::to_string(k) + ",ndcg@" + std::to_string(k);
  return out;
}

inline void write_rec_rows(std::ostream& os, const RunConfig& cfg, const std::string& kind,
                           const std::vector<std::pair<std::string, RecReport>>& rows) {
  os << "dataset,recommender,method,n_sessions" << join_ks(cfg.report_ks) << '\n';
  for (const auto& [method, r] : rows) {
    os << cfg.dataset << ',' << kind << ',' << method << ',' << r.n_sessions;
    for (auto k : cfg.report_ks) os << ',' << fmt_num(r.hr.at(k)) << ',' << fmt_num(r.ndcg.at(k));
    os << '\n';
  }
}

inline std::vector<ExplanationRecord> read_explanations(const Workspace& ws) {
  auto is = open_input(ws.require(files::kExplanations, "explain"));
  return read_explanations_jsonl(is);
}

inline std::string method_name(ContrastiveMode m) {
  switch (m) {
    case ContrastiveMode::both:
      return "explainer";
    case ContrastiveMode::pos_only:
      return "explainer-pos_only";
    case ContrastiveMode::neg_only:
      return "explainer-neg_only";
  }
  return "explainer";
}

// Minimal CSV reader for the files this module writes (no quoting).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(is, line)) t.header = split(line);
  while (std::getline(is, line)) {
    if (!line.empty()) t.rows.push_back(split(line));
  }
  return t;
}

}  // namespace detail

/// Raw interaction log -> sessions, filtering and split.
inline void cmd_prepare(const Workspace& ws) {
  const auto& cfg = ws.config();
  if (cfg.input.empty()) throw ConfigError("prepare needs an input path (--input or config key 'input')");
  auto is = open_input(cfg.input);
  const auto raw = parse_interactions_tsv(is);
  if (raw.empty()) throw EmptyDatasetError("no interactions in " + cfg.input);
  const auto keyed = sessionize(raw);
  const auto filtered = filter_sessions(keyed, cfg.filter_config());
  DatasetSplit split;
  try {
    split = split_sessions(filtered.sessions, filtered.catalog, parse_split_scheme(cfg.split_scheme),
                           derive_seed(cfg.seed, "split"));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("cannot split ") + cfg.input + ": " + e.what());
  }
  ws.log() << "interactions=" << raw.size() << " raw_sessions=" << keyed.size()
           << " kept_sessions=" << filtered.sessions.size() << '\n';
  detail::write_split(ws, split, {{"source", cfg.input}, {"raw_sessions", keyed.size()}});
  ws.echo_config("prepare");
}

/// Planted-structure synthetic dataset.
inline void cmd_synth(const Workspace& ws) {
  const auto data = generate_synthetic(ws.config().synth_spec());
  nlohmann::json extra;
  extra["source"] = "synthetic";
  for (const auto& r : data.rules) extra["rules"].push_back({r.trigger, r.successor});
  extra["trigger_positions"] = data.trigger_positions;
  detail::write_split(ws, data.split, extra);
  ws.echo_config("synth");
}

inline void cmd_train_rec(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto catalog = ws.catalog();
  const auto train = ws.sessions(files::kTrain);
  if (cfg.recommender == "markov") {
    const auto rec = MarkovCountRecommender::fit(catalog, train, cfg.alpha);
    save_checkpoint(ws.path(files::kRecCkpt), recommender_checkpoint(rec));
  } else {
    auto rec = NeuralEmbeddingRecommender::init(catalog, cfg.d, cfg.rho, derive_seed(cfg.seed, "rec-init"));
    const auto curve = train_recommender(rec, train, cfg.rec_train_config());
    auto os = open_output(ws.path(files::kRecLoss));
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < curve.size(); ++e) os << e + 1 << ',' << fmt_num(curve[e]) << '\n';
    if (!curve.empty()) ws.log() << "final training loss " << fmt_num(curve.back(), 6) << '\n';
    save_checkpoint(ws.path(files::kRecCkpt), recommender_checkpoint(rec));
  }
  ws.echo_config("train-rec");
}

inline void cmd_train_explainer(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto rec = ws.recommender();
  const auto train = ws.sessions(files::kTrain);
  const auto start = std::chrono::steady_clock::now();
  const auto out = train_explainer(train, *rec, cfg.env_config(), cfg.trainer_config());
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  {
    auto os = open_output(ws.path(files::kTrainLog));
    write_training_log_csv(os, out.log);
  }
  save_checkpoint(ws.path(files::kPolicyCkpt), detail::policy_checkpoint(out.policy, *rec, cfg));
  ws.log() << "episodes=" << out.log.rows.size() << " updates=" << out.log.updates << " stop=" << out.log.stop_reason
           << " skipped_sessions=" << out.log.skipped_sessions;
  if (!out.log.rows.empty()) {
    ws.log() << " mean_reward=" << fmt_num(out.log.rows.back().mean_reward, 6)
             << " ms_per_episode=" << fmt_num(1000.0 * secs / static_cast<double>(out.log.rows.size()), 3);
  }
  ws.log() << '\n';
  ws.echo_config("train-explainer");
}

inline void cmd_explain(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto rec = ws.recommender();
  const auto policy =
      detail::policy_from_checkpoint(load_checkpoint(ws.require(files::kPolicyCkpt, "train-explainer")), *rec, cfg);
  const auto sessions = detail::explain_sessions(ws);
  std::vector<const Session*> eligible;
  for (const auto& s : sessions) {
    if (s.size() >= 2) eligible.push_back(&s);
  }
  std::vector<ExplanationRecord> records(eligible.size());
  parallel_for(eligible.size(), cfg.workers, [&](std::size_t i) {
    records[i] = explain(policy, make_task(*eligible[i], *rec, cfg.k), cfg.env_config());
  });
  auto os = open_output(ws.path(files::kExplanations));
  write_explanations_jsonl(os, records);
  ws.log() << "explained=" << records.size() << " skipped=" << sessions.size() - records.size() << '\n';
  ws.echo_config("explain");
}

inline void cmd_oracle(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto rec = ws.recommender();
  const auto records = detail::read_explanations(ws);
  struct Row {
    bool solved = false;
    OracleResult res;
  };
  std::vector<Row> rows(records.size());
  // sessions are solved in parallel; each solve is single-threaded
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    const auto& r = records[i];
    if (r.items.size() > cfg.oracle_max_len) return;
    rows[i].res = solve_exact(make_task(Session{r.session_id, r.items, ""}, *rec, cfg.k), cfg.oracle_max_len);
    rows[i].solved = true;
  });
  auto os = open_output(ws.path(files::kOracle));
  os << "session_id,feasible,optimal_complexity,rl_complexity,rl_feasible,gap\n";
  std::size_t solved = 0, feasible = 0, rl_ok = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!rows[i].solved) continue;
    ++solved;
    const auto& r = records[i];
    const auto& res = rows[i].res;
    const bool rl_feasible = r.conditions_met();
    feasible += res.feasible ? 1 : 0;
    rl_ok += res.feasible && rl_feasible ? 1 : 0;
    os << r.session_id << ',' << (res.feasible ? 1 : 0) << ',';
    if (res.optimal_complexity) os << *res.optimal_complexity;
    os << ',' << r.complexity << ',' << (rl_feasible ? 1 : 0) << ',';
    if (res.feasible && rl_feasible) {
      os << static_cast<long long>(r.complexity) - static_cast<long long>(*res.optimal_complexity);
    }
    os << '\n';
  }
  ws.log() << "oracle solved=" << solved << " skipped_long=" << records.size() - solved << " feasible=" << feasible
           << " rl_feasible_on_feasible=" << rl_ok << '\n';
  ws.echo_config("oracle");
}

inline void cmd_eval(const Workspace& ws) {
  const auto& cfg = ws.config();
  const auto rec = ws.recommender();
  const auto test = ws.sessions(files::kTest);
  const auto report = evaluate_ranking(test, *rec, cfg.report_ks);
  {
    auto os = open_output(ws.path(files::kRecMetrics));
    detail::write_rec_rows(os, cfg, rec->kind(), {{"base", report}});
  }
  nlohmann::json summary;
  for (auto k : cfg.report_ks) {
    summary["base"]["hr@" + std::to_string(k)] = report.hr.at(k);
    summary["base"]["ndcg@" + std::to_string(k)] = report.ndcg.at(k);
  }

  const auto records = detail::read_explanations(ws);
  if (records.empty()) throw EmptyDatasetError("no explanations to evaluate");
  std::vector<Session> explained;
  for (const auto& r : records) explained.push_back({r.session_id, r.items, ""});
  Rng rng(derive_seed(cfg.seed, "random-baseline"));
  const auto random = random_explanations(explained, *rec, cfg.k, cfg.keep_prob, rng);
  auto os = open_output(ws.path(files::kExplMetrics));
  os << "dataset,recommender,method,n_sessions,pn,ps,f_ns,avg_len\n";
  for (const auto& [method, recs] :
       {std::pair{std::string("explainer"), &records}, std::pair{std::string("random"), &random}}) {
    const auto m = explanation_metrics(*recs);
    os << cfg.dataset << ',' << rec->kind() << ',' << method << ',' << m.n_sessions << ',' << fmt_num(m.pn) << ','
       << fmt_num(m.ps) << ',' << fmt_num(m.f_ns) << ',' << fmt_num(m.avg_len) << '\n';
    summary[method] = {{"pn", m.pn}, {"ps", m.ps}, {"f_ns", m.f_ns}, {"avg_len", m.avg_len}};
    ws.log() << method << ": PN=" << fmt_num(m.pn, 4) << " PS=" << fmt_num(m.ps, 4) << " F_ns=" << fmt_num(m.f_ns, 4)
             << " avg_len=" << fmt_num(m.avg_len, 4) << '\n';
  }
  auto js = open_output(ws.path(files::kMetricsJson));
  js << summary.dump(2) << '\n';
  ws.echo_config("eval");
}

inline void cmd_finetune(const Workspace& ws) {
  const auto& cfg = ws.config();
  auto rec = ws.recommender();
  if (!rec->trainable()) {
    throw ConfigError("fine-tuning needs a trainable recommender; set recommender=neural (got " + rec->kind() + ")");
  }
  const auto train = ws.sessions(files::kTrain);
  const auto test = ws.sessions(files::kTest);
  auto records = detail::read_explanations(ws);
  std::map<std::string, bool> in_train;
  for (const auto& s : train) in_train[s.session_id] = true;
  std::erase_if(records, [&](const ExplanationRecord& r) { return !in_train.count(r.session_id); });
  const auto set = build_triples(records, train);
  if (set.triples.size() < 2) {
    throw EmptyDatasetError(
        "fine-tuning needs explanations of at least two training sessions; set explain_split "
        "to train or all");
  }
  const auto before = evaluate_ranking(test, *rec, cfg.report_ks);
  const auto fcfg = cfg.finetune_config();
  const auto res = finetune(*rec, set.triples, train, fcfg);
  const auto after = evaluate_ranking(test, *rec, cfg.report_ks);
  {
    auto os = open_output(ws.path(files::kFinetuneLoss));
    write_loss_curve_csv(os, res.curve);
  }
  {
    auto os = open_output(ws.path(files::kFinetuneCompare));
    detail::write_rec_rows(os, cfg, rec->kind(), {{"base", before}, {detail::method_name(fcfg.mode), after}});
  }
  save_checkpoint(ws.path(files::kFinetunedCkpt), recommender_checkpoint(*rec));
  ws.log() << "triples=" << set.triples.size() << " dropped=" << set.dropped
           << " zero_norm_warnings=" << res.zero_norm_warnings;
  for (auto k : cfg.report_ks) {
    ws.log() << " hr@" << k << ": " << fmt_num(before.hr.at(k), 4) << " -> " << fmt_num(after.hr.at(k), 4);
  }
  ws.log() << '\n';
  ws.echo_config("finetune");
}

/// Joins metric files into one table keyed by (dataset, recommender, method).
inline void cmd_report(const Workspace& ws) {
  std::vector<std::string> columns{"dataset", "recommender", "method"};
  std::vector<std::string> keys;
  std::map<std::string, std::map<std::string, std::string>> cells;
  std::size_t found = 0;
  for (const char* name : {files::kRecMetrics, files::kFinetuneCompare, files::kExplMetrics}) {
    const auto p = ws.path(name);
    if (!std::filesystem::exists(p)) continue;
    ++found;
    auto is = open_input(p);
    const auto t = detail::read_csv(is);
    if (t.header.size() < 3 || t.header[0] != "dataset" || t.header[1] != "recommender" || t.header[2] != "method") {
      throw DataError(p + " is not a metric table");
    }
    // the explanation table counts explained sessions, not test sessions
    auto header = t.header;
    if (name == std::string(files::kExplMetrics)) {
      std::replace(header.begin(), header.end(), std::string("n_sessions"), std::string("n_explained"));
    }
    for (std::size_t c = 3; c < header.size(); ++c) {
      if (std::find(columns.begin(), columns.end(), header[c]) == columns.end()) columns.push_back(header[c]);
    }
    for (const auto& row : t.rows) {
      if (row.size() != header.size()) throw DataError(p + " has a ragged row");
      const auto key = row[0] + ',' + row[1] + ',' + row[2];
      if (!cells.count(key)) keys.push_back(key);
      for (std::size_t c = 3; c < row.size(); ++c) cells[key][header[c]] = row[c];
    }
  }
  if (found == 0) throw DependencyError("no metric files in the output directory; run 'eval' first");
  auto os = open_output(ws.path(files::kReport));
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (const auto& key : keys) {
    os << key;
    for (std::size_t c = 3; c < columns.size(); ++c) {
      os << ',';
      auto it = cells[key].find(columns[c]);
      if (it != cells[key].end()) os << it->second;
    }
    os << '\n';
  }
  ws.log() << "report rows=" << keys.size() << " -> " << ws.path(files::kReport) << '\n';
  ws.echo_config("report");
}

/// Data (prepare when an input log is configured, synthetic otherwise), then
/// every downstream stage.
inline void cmd_pipeline(const Workspace& ws) {
  ws.echo_config("pipeline");
  if (ws.config().input.empty()) {
    cmd_synth(ws);
  } else {
    cmd_prepare(ws);
  }
  cmd_train_rec(ws);
  cmd_train_explainer(ws);
  cmd_explain(ws);
  cmd_oracle(ws);
  cmd_eval(ws);
  if (ws.config().recommender == "neural") {
    cmd_finetune(ws);
  } else {
    ws.log() << "finetune skipped: " << ws.config().recommender << " recommender is not trainable\n";
  }
  cmd_report(ws);
}

}  // namespace cf2rec
