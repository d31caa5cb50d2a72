#pragma once

// Domain types shared by every stage: catalog, sessions, masks, explanation
// views and recommendation lists.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cf2rec {

using ItemId = std::uint32_t;

/// Dense item universe. Item ids are 0..item_count-1; labels are optional and,
/// when present, map each id back to its raw key.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::size_t item_count) : item_count_(item_count) {
    if (item_count == 0) throw std::invalid_argument("catalog must hold at least one item");
  }
  explicit Catalog(std::vector<std::string> labels) : item_count_(labels.size()), labels_(std::move(labels)) {
    if (item_count_ == 0) throw std::invalid_argument("catalog must hold at least one item");
  }

  std::size_t size() const { return item_count_; }
  bool contains(ItemId id) const { return id < item_count_; }
  bool has_labels() const { return !labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }

  std::string label(ItemId id) const {
    if (!contains(id)) throw std::invalid_argument("item id out of catalog range: " + std::to_string(id));
    return labels_.empty() ? std::to_string(id) : labels_[id];
  }

  bool operator==(const Catalog&) const = default;

 private:
  std::size_t item_count_ = 0;
  std::vector<std::string> labels_;
};

/// Ordered interactions of one anonymous visit. Duplicates are allowed and
/// order is significant. user_id is provenance only (empty when unknown).
struct Session {
  std::string session_id;
  std::vector<ItemId> items;
  std::string user_id;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  bool operator==(const Session&) const = default;
};

/// Binary inclusion vector over the positions of one session.
struct Mask {
  std::vector<std::uint8_t> bits;

  Mask() = default;
  explicit Mask(std::vector<std::uint8_t> b) : bits(std::move(b)) {
    for (auto& bit : bits) {
      if (bit > 1) throw std::invalid_argument("mask bits must be 0 or 1");
    }
  }
  static Mask zeros(std::size_t n) { return Mask(std::vector<std::uint8_t>(n, 0)); }
  static Mask ones(std::size_t n) { return Mask(std::vector<std::uint8_t>(n, 1)); }

  std::size_t size() const { return bits.size(); }
  bool operator==(const Mask&) const = default;
};

/// Explanation complexity: the number of selected positions.
inline std::size_t mask_complexity(const Mask& mask) {
  std::size_t n = 0;
  for (auto bit : mask.bits) n += bit;
  return n;
}

inline std::string mask_to_string(const Mask& mask) {
  std::string s;
  s.reserve(mask.size());
  for (auto bit : mask.bits) s.push_back(bit ? '1' : '0');
  return s;
}

/// A session split by a mask into the selected sub-session and its remainder.
struct ExplanationView {
  Session session;
  Mask mask;
  std::vector<ItemId> selected;
  std::vector<ItemId> remainder;
};

inline ExplanationView apply_mask(const Session& session, const Mask& mask) {
  if (mask.size() != session.size()) {
    throw std::invalid_argument("mask length " + std::to_string(mask.size()) + " does not match session length " +
                                std::to_string(session.size()));
  }
  ExplanationView view{session, mask, {}, {}};
  for (std::size_t i = 0; i < session.size(); ++i) {
    (mask.bits[i] ? view.selected : view.remainder).push_back(session.items[i]);
  }
  return view;
}

struct RecEntry {
  ItemId item = 0;
  double score = 0.0;
  bool operator==(const RecEntry&) const = default;
};

/// Top-K list: scores non-increasing, ties by ascending item id, no duplicates.
struct RecList {
  std::vector<RecEntry> entries;
  std::size_t k = 0;

  bool contains(ItemId item) const {
    for (const auto& e : entries) {
      if (e.item == item) return true;
    }
    return false;
  }
  std::vector<ItemId> items() const {
    std::vector<ItemId> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.item);
    return out;
  }
  bool operator==(const RecList&) const = default;
};

/// The four reward terms of one terminal step and their (enabled) sum.
struct RewardBreakdown {
  double r_fe = 0.0;
  double r_cfe = 0.0;
  double r_sp = 0.0;
  double r_rank = 0.0;
  double total = 0.0;
  bool operator==(const RewardBreakdown&) const = default;
};

struct TraceStep {
  std::size_t step = 0;
  double include_prob = 0.0;
  int action = 0;
  double reward = 0.0;
  bool operator==(const TraceStep&) const = default;
};

/// One explained session with its verdicts against the frozen recommender.
struct ExplanationRecord {
  std::string session_id;
  std::vector<ItemId> items;
  ItemId target = 0;
  Mask mask;
  bool factual_ok = false;
  bool counterfactual_ok = false;
  std::size_t complexity = 0;
  std::size_t rank_of_target = 0;  // 1-based rank of target given the selected sub-session
  std::optional<RewardBreakdown> reward;
  std::vector<TraceStep> trace;

  bool conditions_met() const { return factual_ok && counterfactual_ok; }
  bool operator==(const ExplanationRecord&) const = default;
};

}  // namespace cf2rec
