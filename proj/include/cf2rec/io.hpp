#pragma once

// Line-delimited JSON stores for sessions and explanations, and the catalog
// mapping file.

#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/core.hpp"
#include "cf2rec/errors.hpp"

namespace cf2rec {

using json = nlohmann::json;

/// Input file that is missing or unreadable.
class MissingInputError : public DataError {
 public:
  using DataError::DataError;
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("cannot open " + path);
  return is;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  return os;
}

inline json parse_line(const std::string& line) {
  auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("malformed JSON line: " + line.substr(0, 80));
  return j;
}

inline void write_sessions_jsonl(std::ostream& os, std::span<const Session> sessions) {
  for (const auto& s : sessions) {
    json j;
    j["session_id"] = s.session_id;
    j["user_id"] = s.user_id;
    j["items"] = s.items;
    os << j.dump() << '\n';
  }
}

inline std::vector<Session> read_sessions_jsonl(std::istream& is) {
  std::vector<Session> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = parse_line(line);
    out.push_back({j.at("session_id").get<std::string>(), j.at("items").get<std::vector<ItemId>>(),
                   j.value("user_id", std::string{})});
  }
  return out;
}

/// item_key <TAB> id, one line per item in id order.
inline void write_catalog_tsv(std::ostream& os, const Catalog& catalog) {
  os << "item_key\tid\n";
  for (ItemId i = 0; i < catalog.size(); ++i) os << catalog.label(i) << '\t' << i << '\n';
}

inline Catalog read_catalog_tsv(std::istream& is) {
  std::vector<std::string> labels;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("malformed catalog line '" + line + "'");
    if (std::stoul(line.substr(tab + 1)) != labels.size()) throw DataError("catalog ids must be dense and ordered");
    labels.push_back(line.substr(0, tab));
  }
  if (labels.empty()) throw EmptyDatasetError("catalog file lists no items");
  return Catalog(std::move(labels));
}

inline json to_json(const ExplanationRecord& r) {
  json j;
  j["session_id"] = r.session_id;
  j["items"] = r.items;
  j["target"] = r.target;
  j["mask"] = r.mask.bits;
  j["factual_ok"] = r.factual_ok;
  j["counterfactual_ok"] = r.counterfactual_ok;
  j["complexity"] = r.complexity;
  j["rank"] = r.rank_of_target;
  if (r.reward) {
    j["reward"] = {{"r_fe", r.reward->r_fe},
                   {"r_cfe", r.reward->r_cfe},
                   {"r_sp", r.reward->r_sp},
                   {"r_rank", r.reward->r_rank},
                   {"total", r.reward->total}};
  }
  return j;
}

inline ExplanationRecord explanation_from_json(const json& j) {
  ExplanationRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.items = j.at("items").get<std::vector<ItemId>>();
  r.target = j.at("target").get<ItemId>();
  r.mask = Mask(j.at("mask").get<std::vector<std::uint8_t>>());
  r.factual_ok = j.at("factual_ok").get<bool>();
  r.counterfactual_ok = j.at("counterfactual_ok").get<bool>();
  r.complexity = j.at("complexity").get<std::size_t>();
  r.rank_of_target = j.at("rank").get<std::size_t>();
  if (j.contains("reward")) {
    const auto& w = j.at("reward");
    r.reward = RewardBreakdown{w.at("r_fe").get<double>(), w.at("r_cfe").get<double>(), w.at("r_sp").get<double>(),
                               w.at("r_rank").get<double>(), w.at("total").get<double>()};
  }
  return r;
}

inline void write_explanations_jsonl(std::ostream& os, std::span<const ExplanationRecord> records) {
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

inline std::vector<ExplanationRecord> read_explanations_jsonl(std::istream& is) {
  std::vector<ExplanationRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(explanation_from_json(parse_line(line)));
  }
  return out;
}

}  // namespace cf2rec
