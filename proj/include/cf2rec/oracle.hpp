#pragma once

// Exhaustive solver for the minimum-complexity explanation problem:
//
//   minimize |M|_1  s.t.  i* in topK(S . M),  i* not in topK(S \ (S . M))
//
// Every one of the 2^|S| masks is evaluated. Among optima of equal complexity
// the lexicographically smallest bit pattern (read left to right) wins.

#include <bit>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cf2rec/env.hpp"
#include "cf2rec/errors.hpp"
#include "cf2rec/parallel.hpp"

namespace cf2rec {

inline constexpr std::size_t kDefaultOracleMaxLen = 20;

struct OracleResult {
  bool feasible = false;
  std::optional<Mask> optimal_mask;
  std::optional<std::size_t> optimal_complexity;
  std::uint64_t feasible_count = 0;
  std::uint64_t enumerated = 0;
};

enum class EnumerationOrder { forward, reverse };

/// Both explanation conditions evaluated directly against the recommender.
struct Verdict {
  bool factual_ok = false;
  bool counterfactual_ok = false;
  bool both() const { return factual_ok && counterfactual_ok; }
};

inline Verdict verify(const ExplainTask& task, const Mask& mask) {
  const auto view = apply_mask(task.session, mask);
  const auto& rec = *task.recommender;
  return {rec.in_topk(view.selected, task.target, task.k), !rec.in_topk(view.remainder, task.target, task.k)};
}

namespace detail {

// Position i of an n-long session maps to bit (n - 1 - i), so integer order
// equals left-to-right lexicographic order of the bit vectors.
inline Mask mask_from_code(std::uint64_t code, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  for (std::size_t i = 0; i < n; ++i) bits[i] = static_cast<std::uint8_t>((code >> (n - 1 - i)) & 1u);
  return Mask(std::move(bits));
}

inline std::vector<ItemId> select_by_code(const std::vector<ItemId>& items, std::uint64_t code) {
  const auto n = items.size();
  std::vector<ItemId> out;
  for (std::size_t i = 0; i < n; ++i) {
    if ((code >> (n - 1 - i)) & 1u) out.push_back(items[i]);
  }
  return out;
}

}  // namespace detail

/// Enumerates all masks. The recommender is queried once per position subset:
/// membership of i* in topK(S . m) is tabulated for every m, and the remainder
/// of m is the subset ~m.
inline OracleResult solve_exact(const ExplainTask& task, std::size_t max_len = kDefaultOracleMaxLen,
                                std::size_t workers = 1, EnumerationOrder order = EnumerationOrder::forward) {
  const auto n = task.session.size();
  if (n > max_len) {
    throw LengthLimitError("session '" + task.session.session_id + "' has " + std::to_string(n) +
                           " items; exact enumeration is limited to " + std::to_string(max_len));
  }
  if (n >= 63) throw LengthLimitError("session too long for exhaustive enumeration");
  const std::uint64_t total = std::uint64_t{1} << n;
  const std::uint64_t full = total - 1;
  const auto& rec = *task.recommender;

  std::vector<std::uint8_t> in_topk(total);
  parallel_for(total, workers, [&](std::size_t code) {
    in_topk[code] = rec.in_topk(detail::select_by_code(task.session.items, code), task.target, task.k) ? 1 : 0;
  });

  OracleResult res;
  res.enumerated = total;
  std::optional<std::uint64_t> best;
  auto better = [&](std::uint64_t code) {
    if (!best) return true;
    const auto c = std::popcount(code), b = std::popcount(*best);
    return c < b || (c == b && code < *best);
  };
  auto visit = [&](std::uint64_t code) {
    if (!in_topk[code] || in_topk[full & ~code]) return;
    ++res.feasible_count;
    if (better(code)) best = code;
  };
  if (order == EnumerationOrder::forward) {
    for (std::uint64_t code = 0; code < total; ++code) visit(code);
  } else {
    for (std::uint64_t code = total; code-- > 0;) visit(code);
  }
  if (best) {
    res.feasible = true;
    res.optimal_mask = detail::mask_from_code(*best, n);
    res.optimal_complexity = static_cast<std::size_t>(std::popcount(*best));
  }
  return res;
}

}  // namespace cf2rec
