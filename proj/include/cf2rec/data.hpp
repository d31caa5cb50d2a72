#pragma once

// Interaction-log ingestion and the planted-structure synthetic generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/core.hpp"
#include "cf2rec/errors.hpp"
#include "cf2rec/random.hpp"

namespace cf2rec {

struct RawInteraction {
  std::string user_id;
  std::string item_key;
  std::int64_t timestamp = 0;  // seconds since the epoch, UTC
  bool operator==(const RawInteraction&) const = default;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::int64_t utc_day(std::int64_t ts) { return ts >= 0 ? ts / 86400 : -((-ts + 86399) / 86400); }

}  // namespace detail

/// Tab-separated user_id, item_key, timestamp; one interaction per line. A
/// first line whose timestamp column is not an integer is taken as a header.
inline std::vector<RawInteraction> parse_interactions_tsv(std::istream& is) {
  std::vector<RawInteraction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = detail::split_tabs(line);
    if (f.size() != 3) throw DataError("line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    auto ts = detail::parse_int(f[2]);
    if (!ts) {
      if (lineno == 1) continue;
      throw DataError("line " + std::to_string(lineno) + ": timestamp '" + f[2] + "' is not an integer");
    }
    if (*ts < 0) throw DataError("line " + std::to_string(lineno) + ": negative timestamp");
    out.push_back({f[0], f[1], *ts});
  }
  return out;
}

inline void write_interactions_tsv(std::ostream& os, std::span<const RawInteraction> rows) {
  os << "user_id\titem_key\ttimestamp\n";
  for (const auto& r : rows) os << r.user_id << '\t' << r.item_key << '\t' << r.timestamp << '\n';
}

/// A session before catalog ids are assigned.
struct KeyedSession {
  std::string session_id;
  std::string user_id;
  std::int64_t day = 0;
  std::vector<std::string> items;
  bool operator==(const KeyedSession&) const = default;
};

/// Per user, interactions on the same UTC calendar day form one session,
/// ordered by timestamp (input order among equal timestamps). Output is
/// ordered by user id, then day.
inline std::vector<KeyedSession> sessionize(std::span<const RawInteraction> interactions) {
  std::vector<std::size_t> idx(interactions.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = interactions[a];
    const auto& y = interactions[b];
    if (x.user_id != y.user_id) return x.user_id < y.user_id;
    return x.timestamp < y.timestamp;
  });
  std::vector<KeyedSession> out;
  for (auto i : idx) {
    const auto& r = interactions[i];
    const auto day = detail::utc_day(r.timestamp);
    if (out.empty() || out.back().user_id != r.user_id || out.back().day != day) {
      out.push_back({r.user_id + "/" + std::to_string(day), r.user_id, day, {}});
    }
    out.back().items.push_back(r.item_key);
  }
  return out;
}

struct FilterConfig {
  std::size_t min_len = 2;
  std::size_t min_item_freq = 0;
  std::optional<std::size_t> max_item_freq = 100;  // items with more interactions are dropped
};

struct FilteredData {
  std::vector<Session> sessions;
  Catalog catalog;
};

/// Drops short sessions and items outside the frequency bounds, repeating
/// until nothing changes, then assigns dense ids in ascending key order.
inline FilteredData filter_sessions(std::span<const KeyedSession> input, const FilterConfig& cfg) {
  std::vector<KeyedSession> cur(input.begin(), input.end());
  bool changed = true;
  while (changed) {
    changed = false;
    std::erase_if(cur, [&](const KeyedSession& s) {
      const bool drop = s.items.size() < cfg.min_len;
      changed |= drop;
      return drop;
    });
    std::map<std::string, std::size_t> freq;
    for (const auto& s : cur) {
      for (const auto& k : s.items) ++freq[k];
    }
    for (auto& s : cur) {
      const auto before = s.items.size();
      std::erase_if(s.items, [&](const std::string& k) {
        const auto f = freq[k];
        return f < cfg.min_item_freq || (cfg.max_item_freq && f > *cfg.max_item_freq);
      });
      changed |= s.items.size() != before;
    }
  }
  if (cur.empty()) throw EmptyDatasetError("no sessions survive filtering");
  std::set<std::string> keys;
  for (const auto& s : cur) keys.insert(s.items.begin(), s.items.end());
  std::vector<std::string> labels(keys.begin(), keys.end());
  std::map<std::string, ItemId> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) ids[labels[i]] = static_cast<ItemId>(i);
  FilteredData out{{}, Catalog(std::move(labels))};
  for (const auto& s : cur) {
    Session sess{s.session_id, {}, s.user_id};
    for (const auto& k : s.items) sess.items.push_back(ids.at(k));
    out.sessions.push_back(std::move(sess));
  }
  return out;
}

/// Maps filtered sessions back to keys (used to re-run the filter).
inline std::vector<KeyedSession> to_keyed(const FilteredData& data) {
  std::vector<KeyedSession> out;
  for (const auto& s : data.sessions) {
    KeyedSession k{s.session_id, s.user_id, 0, {}};
    for (auto id : s.items) k.items.push_back(data.catalog.label(id));
    out.push_back(std::move(k));
  }
  return out;
}

enum class SplitScheme { last_session_per_user, ratio };

inline SplitScheme parse_split_scheme(const std::string& s) {
  if (s == "last_session_per_user") return SplitScheme::last_session_per_user;
  if (s == "ratio") return SplitScheme::ratio;
  throw std::invalid_argument("unknown split scheme '" + s + "'");
}

struct DatasetStats {
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  std::size_t n_test = 0;
  std::size_t n_items = 0;
  double avg_train_len = 0.0;
};

struct DatasetSplit {
  std::vector<Session> train;
  std::vector<Session> valid;
  std::vector<Session> test;
  Catalog catalog;
  DatasetStats stats;
};

inline DatasetStats compute_stats(const DatasetSplit& d) {
  DatasetStats s;
  s.n_train = d.train.size();
  s.n_valid = d.valid.size();
  s.n_test = d.test.size();
  s.n_items = d.catalog.size();
  double len = 0;
  for (const auto& x : d.train) len += static_cast<double>(x.size());
  s.avg_train_len = d.train.empty() ? 0.0 : len / static_cast<double>(d.train.size());
  return s;
}

/// last_session_per_user: each user's final session is held out for test and
/// 10% of the rest (seeded) for validation. ratio: a seeded 75/15/10 split.
/// Every split keeps the input order of its sessions.
inline DatasetSplit split_sessions(std::span<const Session> sessions, const Catalog& catalog, SplitScheme scheme,
                                   std::uint64_t seed) {
  DatasetSplit out;
  out.catalog = catalog;
  Rng rng(seed);
  const auto n = sessions.size();
  std::vector<int> bucket(n, 0);  // 0 train, 1 valid, 2 test
  if (scheme == SplitScheme::last_session_per_user) {
    std::map<std::string, std::size_t> last;
    for (std::size_t i = 0; i < n; ++i) {
      if (sessions[i].user_id.empty()) {
        throw std::invalid_argument("last-session split needs user provenance on every session");
      }
      last[sessions[i].user_id] = i;
    }
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i) {
      if (last.at(sessions[i].user_id) == i) {
        bucket[i] = 2;
      } else {
        rest.push_back(i);
      }
    }
    std::shuffle(rest.begin(), rest.end(), rng);
    const auto n_valid = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rest.size())));
    for (std::size_t j = 0; j < n_valid; ++j) bucket[rest[j]] = 1;
  } else {
    if (n < 10) throw std::invalid_argument("ratio split needs at least 10 sessions");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
    for (std::size_t j = 0; j < n; ++j) bucket[idx[j]] = j < n_train ? 0 : (j < n_train + n_valid ? 1 : 2);
  }
  for (std::size_t i = 0; i < n; ++i) {
    (bucket[i] == 0 ? out.train : bucket[i] == 1 ? out.valid : out.test).push_back(sessions[i]);
  }
  out.stats = compute_stats(out);
  return out;
}

/// Planted structure for desk-scale experiments: trigger items are followed
/// by their successor with probability p_trigger; everything else is drawn
/// from the background pool (all non-successor items).
struct SynthSpec {
  std::size_t n_items = 50;
  std::size_t n_sessions = 200;
  std::size_t min_len = 5;
  std::size_t max_len = 10;
  std::size_t n_rules = 8;
  double p_trigger = 0.9;
  double noise = 0.05;  // chance that any position is a uniform draw over the whole catalog
  std::uint64_t seed = 0;
};

struct TriggerRule {
  ItemId trigger = 0;
  ItemId successor = 0;
};

struct SyntheticData {
  DatasetSplit split;
  std::vector<TriggerRule> rules;
  // Positions of triggers that were followed by their planted successor.
  std::map<std::string, std::vector<std::size_t>> trigger_positions;
};

inline SyntheticData generate_synthetic(const SynthSpec& spec) {
  if (spec.n_sessions == 0) throw EmptyDatasetError("synthetic spec asks for zero sessions");
  if (!(spec.p_trigger > 0.5 && spec.p_trigger <= 1.0)) throw std::invalid_argument("p_trigger must lie in (0.5, 1]");
  if (spec.noise < 0.0 || spec.noise > 1.0) throw std::invalid_argument("noise must lie in [0, 1]");
  if (spec.min_len < 2 || spec.min_len > spec.max_len) throw std::invalid_argument("need 2 <= min_len <= max_len");
  if (2 * spec.n_rules >= spec.n_items) throw std::invalid_argument("catalog too small for the requested rules");

  Rng rng(spec.seed);
  std::vector<ItemId> perm(spec.n_items);
  std::iota(perm.begin(), perm.end(), ItemId{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  SyntheticData out;
  std::map<ItemId, ItemId> successor_of;
  std::set<ItemId> successors;
  for (std::size_t r = 0; r < spec.n_rules; ++r) {
    out.rules.push_back({perm[r], perm[spec.n_rules + r]});
    successor_of[perm[r]] = perm[spec.n_rules + r];
    successors.insert(perm[spec.n_rules + r]);
  }
  std::vector<ItemId> background;
  for (ItemId i = 0; i < spec.n_items; ++i) {
    if (!successors.count(i)) background.push_back(i);
  }
  auto pick = [&](const std::vector<ItemId>& pool) {
    return pool[static_cast<std::size_t>(uniform01(rng) * pool.size())];
  };
  auto pick_any = [&] { return static_cast<ItemId>(uniform01(rng) * static_cast<double>(spec.n_items)); };

  std::vector<Session> sessions;
  const auto span_len = spec.max_len - spec.min_len + 1;
  for (std::size_t s = 0; s < spec.n_sessions; ++s) {
    const auto len = spec.min_len + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(span_len));
    Session sess{"s" + std::to_string(s), {}, "u" + std::to_string(s)};
    std::vector<std::size_t> planted;
    for (std::size_t j = 0; j < len; ++j) {
      ItemId next;
      if (uniform01(rng) < spec.noise) {
        next = pick_any();
      } else if (j > 0 && successor_of.count(sess.items.back()) && uniform01(rng) < spec.p_trigger) {
        next = successor_of.at(sess.items.back());
        planted.push_back(j - 1);
      } else {
        next = pick(background);
      }
      sess.items.push_back(next);
    }
    out.trigger_positions[sess.session_id] = std::move(planted);
    sessions.push_back(std::move(sess));
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < spec.n_items; ++i) labels.push_back("i" + std::to_string(i));
  out.split = split_sessions(sessions, Catalog(std::move(labels)), SplitScheme::ratio, derive_seed(spec.seed, "split"));
  return out;
}

}  // namespace cf2rec
