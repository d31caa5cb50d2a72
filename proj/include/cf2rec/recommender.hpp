#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cf2rec/core.hpp"
#include "cf2rec/errors.hpp"
#include "cf2rec/tensor.hpp"

namespace cf2rec {

/// A (prefix, next item) pair used for next-item training.
struct TrainingExample {
  std::vector<ItemId> prefix;
  ItemId target = 0;
};

/// Every next-item example of a session: prefix [0, j) -> item j for j >= 1.
inline std::vector<TrainingExample> make_examples(std::span<const Session> sessions) {
  std::vector<TrainingExample> out;
  for (const auto& s : sessions) {
    for (std::size_t j = 1; j < s.items.size(); ++j) {
      out.push_back(
          {std::vector<ItemId>(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(j)), s.items[j]});
    }
  }
  return out;
}

/// Top-K over a full score vector. Ties go to the smaller item id.
inline RecList topk_from_scores(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) {
    throw std::invalid_argument("K=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
  }
  if (!all_finite(scores)) throw NumericError("non-finite recommendation score");
  std::vector<ItemId> order(scores.size());
  std::iota(order.begin(), order.end(), ItemId{0});
  auto before = [&](ItemId a, ItemId b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  RecList list;
  list.k = k;
  list.entries.reserve(k);
  for (std::size_t i = 0; i < k; ++i) list.entries.push_back({order[i], scores[order[i]]});
  return list;
}

/// 1-based position of item in the full ordering used by topk_from_scores.
inline std::size_t rank_from_scores(std::span<const double> scores, ItemId item) {
  if (item >= scores.size()) throw std::invalid_argument("item id out of catalog range: " + std::to_string(item));
  const double s = scores[item];
  if (!std::isfinite(s)) throw NumericError("non-finite recommendation score");
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < item)) ++rank;
  }
  return rank;
}

/// The recommender contract: a session embedding plus full-catalog scores.
/// Implementations must map the empty session to the zero embedding.
class Recommender {
 public:
  virtual ~Recommender() = default;

  virtual std::string kind() const = 0;
  virtual const Catalog& catalog() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual std::vector<double> encode(std::span<const ItemId> items) const = 0;
  virtual std::vector<double> scores(std::span<const ItemId> items) const = 0;

  virtual bool trainable() const { return false; }

  /// Mean cross-entropy of the catalog softmax against the examples' targets.
  virtual std::pair<double, ParamStore> rec_loss_and_grads(std::span<const TrainingExample>) const {
    throw UnsupportedOperation(kind() + " recommender is not trainable");
  }
  /// Backpropagates a gradient w.r.t. encode(items) into parameter gradients.
  virtual void encode_backward(std::span<const ItemId>, std::span<const double>, ParamStore&) const {
    throw UnsupportedOperation(kind() + " recommender is not trainable");
  }
  virtual const ParamStore& params() const { throw UnsupportedOperation(kind() + " recommender has no parameters"); }
  virtual ParamStore& mutable_params() { throw UnsupportedOperation(kind() + " recommender has no parameters"); }

  void apply_grads(const ParamStore& grads, double learning_rate) {
    if (!trainable()) throw UnsupportedOperation(kind() + " recommender is not trainable");
    cf2rec::apply_grads(mutable_params(), grads, learning_rate);
  }

  RecList topk(std::span<const ItemId> items, std::size_t k) const {
    if (k == 0 || k > catalog().size()) {
      throw std::invalid_argument("K=" + std::to_string(k) + " outside [1, " + std::to_string(catalog().size()) + "]");
    }
    return topk_from_scores(scores(items), k);
  }
  RecList topk(const Session& s, std::size_t k) const { return topk(std::span<const ItemId>(s.items), k); }

  std::size_t rank_of(std::span<const ItemId> items, ItemId item) const {
    if (!catalog().contains(item)) throw std::invalid_argument("unknown item id " + std::to_string(item));
    return rank_from_scores(scores(items), item);
  }
  std::size_t rank_of(const Session& s, ItemId item) const { return rank_of(std::span<const ItemId>(s.items), item); }

  bool in_topk(std::span<const ItemId> items, ItemId item, std::size_t k) const { return rank_of(items, item) <= k; }

 protected:
  void check_items(std::span<const ItemId> items) const {
    for (auto id : items) {
      if (!catalog().contains(id)) throw std::invalid_argument("unknown item id " + std::to_string(id));
    }
  }
};

}  // namespace cf2rec
