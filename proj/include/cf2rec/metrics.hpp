#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "cf2rec/oracle.hpp"
#include "cf2rec/random.hpp"

namespace cf2rec {

struct ExplanationReport {
  double ps = 0.0;
  double pn = 0.0;
  double f_ns = 0.0;
  double avg_len = 0.0;
  std::size_t n_sessions = 0;
};

inline double harmonic_fns(double pn, double ps) { return pn + ps > 0.0 ? 2.0 * pn * ps / (pn + ps) : 0.0; }

/// PS and PN are the fractions of explained sessions whose explanation meets
/// the factual and the counterfactual condition, respectively.
inline ExplanationReport explanation_metrics(std::span<const ExplanationRecord> records) {
  if (records.empty()) throw std::invalid_argument("explanation metrics need at least one record");
  ExplanationReport r;
  r.n_sessions = records.size();
  double fe = 0, cfe = 0, len = 0;
  for (const auto& rec : records) {
    fe += rec.factual_ok ? 1.0 : 0.0;
    cfe += rec.counterfactual_ok ? 1.0 : 0.0;
    len += static_cast<double>(rec.complexity);
  }
  const double n = static_cast<double>(records.size());
  r.ps = fe / n;
  r.pn = cfe / n;
  r.f_ns = harmonic_fns(r.pn, r.ps);
  r.avg_len = len / n;
  return r;
}

/// A held-out case: the last item of the session is the target, the items
/// before it are the input.
inline bool evaluable(const Session& s) { return s.size() >= 2; }

inline std::size_t count_unevaluable(std::span<const Session> test) {
  std::size_t skipped = 0;
  for (const auto& s : test) skipped += evaluable(s) ? 0 : 1;
  return skipped;
}

/// Target ranks of every evaluable case (sessions shorter than two are skipped).
inline std::vector<std::size_t> target_ranks(std::span<const Session> test, const Recommender& rec) {
  std::vector<std::size_t> ranks;
  for (const auto& s : test) {
    if (!evaluable(s)) continue;
    std::span<const ItemId> prefix(s.items.data(), s.items.size() - 1);
    ranks.push_back(rec.rank_of(prefix, s.items.back()));
  }
  return ranks;
}

inline double hr_from_ranks(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double hits = 0;
  for (auto r : ranks) hits += r <= k ? 1.0 : 0.0;
  return hits / static_cast<double>(ranks.size());
}

inline double ndcg_from_ranks(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) return 0.0;
  double gain = 0;
  for (auto r : ranks) gain += r <= k ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
  return gain / static_cast<double>(ranks.size());
}

inline double hr_at_k(std::span<const Session> test, const Recommender& rec, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be at least 1");
  return hr_from_ranks(target_ranks(test, rec), k);
}

inline double ndcg_at_k(std::span<const Session> test, const Recommender& rec, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be at least 1");
  return ndcg_from_ranks(target_ranks(test, rec), k);
}

struct RecReport {
  std::map<std::size_t, double> hr;
  std::map<std::size_t, double> ndcg;
  std::size_t n_sessions = 0;
  std::size_t skipped = 0;
};

inline RecReport evaluate_ranking(std::span<const Session> test, const Recommender& rec,
                                  std::span<const std::size_t> ks) {
  RecReport r;
  const auto ranks = target_ranks(test, rec);
  r.n_sessions = ranks.size();
  r.skipped = test.size() - ranks.size();
  for (auto k : ks) {
    if (k == 0) throw std::invalid_argument("K must be at least 1");
    r.hr[k] = hr_from_ranks(ranks, k);
    r.ndcg[k] = ndcg_from_ranks(ranks, k);
  }
  return r;
}

/// Random-selection baseline: each item is kept independently with keep_prob.
/// Sessions shorter than two are skipped.
inline std::vector<ExplanationRecord> random_explanations(std::span<const Session> sessions, const Recommender& rec,
                                                          std::size_t k, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) throw std::invalid_argument("keep_prob must lie in (0, 1)");
  std::vector<ExplanationRecord> out;
  for (const auto& s : sessions) {
    if (s.size() < 2) continue;
    const auto task = make_task(s, rec, k);
    std::vector<std::uint8_t> bits(s.size());
    for (auto& b : bits) b = uniform01(rng) < keep_prob ? 1 : 0;
    ExplanationRecord r;
    r.session_id = s.session_id;
    r.items = s.items;
    r.target = task.target;
    r.mask = Mask(std::move(bits));
    const auto v = verify(task, r.mask);
    r.factual_ok = v.factual_ok;
    r.counterfactual_ok = v.counterfactual_ok;
    r.complexity = mask_complexity(r.mask);
    r.rank_of_target = rec.rank_of(apply_mask(s, r.mask).selected, task.target);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cf2rec
