#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/recommender.hpp"

namespace cf2rec {

/// First-order transition-count model.
///
///   score(S, j) = T[last(S)][j] + alpha * pop[j] / sum(pop)
///
/// The empty session scores by the popularity prior alone. The embedding is a
/// one-hot of the last item (d = |V|), zero for the empty session.
class MarkovCountRecommender final : public Recommender {
 public:
  MarkovCountRecommender(Catalog catalog, std::vector<double> transitions, std::vector<double> popularity, double alpha)
      : catalog_(std::move(catalog)),
        transitions_(std::move(transitions)),
        popularity_(std::move(popularity)),
        alpha_(alpha) {
    const auto n = catalog_.size();
    if (transitions_.size() != n * n) throw std::invalid_argument("transition table must be |V| x |V|");
    if (popularity_.size() != n) throw std::invalid_argument("popularity vector must have |V| entries");
    if (alpha_ < 0.0) throw std::invalid_argument("smoothing alpha must be non-negative");
    for (double c : transitions_) {
      if (c < 0.0) throw std::invalid_argument("transition counts must be non-negative");
    }
    for (double c : popularity_) {
      if (c < 0.0) throw std::invalid_argument("popularity counts must be non-negative");
      pop_total_ += c;
    }
  }

  static MarkovCountRecommender fit(const Catalog& catalog, std::span<const Session> sessions, double alpha) {
    const auto n = catalog.size();
    std::vector<double> trans(n * n, 0.0), pop(n, 0.0);
    for (const auto& s : sessions) {
      for (std::size_t i = 0; i < s.items.size(); ++i) {
        if (!catalog.contains(s.items[i])) throw std::invalid_argument("unknown item id " + std::to_string(s.items[i]));
        pop[s.items[i]] += 1.0;
        if (i + 1 < s.items.size()) trans[s.items[i] * n + s.items[i + 1]] += 1.0;
      }
    }
    return MarkovCountRecommender(catalog, std::move(trans), std::move(pop), alpha);
  }

  std::string kind() const override { return "markov"; }
  const Catalog& catalog() const override { return catalog_; }
  std::size_t embed_dim() const override { return catalog_.size(); }
  double alpha() const { return alpha_; }
  const std::vector<double>& transitions() const { return transitions_; }
  const std::vector<double>& popularity() const { return popularity_; }

  std::vector<double> encode(std::span<const ItemId> items) const override {
    check_items(items);
    std::vector<double> e(catalog_.size(), 0.0);
    if (!items.empty()) e[items.back()] = 1.0;
    return e;
  }

  std::vector<double> scores(std::span<const ItemId> items) const override {
    check_items(items);
    const auto n = catalog_.size();
    std::vector<double> s(n, 0.0);
    if (pop_total_ > 0.0) {
      for (std::size_t j = 0; j < n; ++j) s[j] = alpha_ * popularity_[j] / pop_total_;
    }
    if (!items.empty()) {
      const double* row = transitions_.data() + static_cast<std::size_t>(items.back()) * n;
      for (std::size_t j = 0; j < n; ++j) s[j] += row[j];
    }
    return s;
  }

 private:
  Catalog catalog_;
  std::vector<double> transitions_;  // row-major |V| x |V|
  std::vector<double> popularity_;
  double alpha_ = 0.1;
  double pop_total_ = 0.0;
};

}  // namespace cf2rec
