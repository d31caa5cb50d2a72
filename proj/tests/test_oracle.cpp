#include <gtest/gtest.h>

#include <algorithm>

#include "cf2rec/data.hpp"
#include "cf2rec/markov.hpp"
#include "cf2rec/oracle.hpp"

using namespace cf2rec;

namespace {

// Item `target` tops the ranking iff `trigger` occurs anywhere in the input;
// otherwise scores descend with item id.
class PresenceRecommender final : public Recommender {
 public:
  PresenceRecommender(std::size_t v, ItemId trigger, ItemId target) : catalog_(v), trigger_(trigger), target_(target) {}
  std::string kind() const override { return "presence"; }
  const Catalog& catalog() const override { return catalog_; }
  std::size_t embed_dim() const override { return 1; }
  std::vector<double> encode(std::span<const ItemId> items) const override {
    return {static_cast<double>(items.size())};
  }
  std::vector<double> scores(std::span<const ItemId> items) const override {
    std::vector<double> s(catalog_.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = -static_cast<double>(i);
    if (std::find(items.begin(), items.end(), trigger_) != items.end()) s[target_] = 1.0;
    return s;
  }

 private:
  Catalog catalog_;
  ItemId trigger_, target_;
};

class ConstantRecommender final : public Recommender {
 public:
  explicit ConstantRecommender(std::size_t v) : catalog_(v) {}
  std::string kind() const override { return "constant"; }
  const Catalog& catalog() const override { return catalog_; }
  std::size_t embed_dim() const override { return 1; }
  std::vector<double> encode(std::span<const ItemId>) const override { return {0.0}; }
  std::vector<double> scores(std::span<const ItemId>) const override {
    return std::vector<double>(catalog_.size(), 1.0);
  }

 private:
  Catalog catalog_;
};

}  // namespace

TEST(Oracle, SingleDecisiveItem) {
  PresenceRecommender rec(10, 3, 9);
  auto task = make_task(Session{"p", {5, 3, 6, 7}, ""}, rec, 2);
  ASSERT_EQ(task.target, 9u);
  auto res = solve_exact(task);
  ASSERT_TRUE(res.feasible);
  EXPECT_EQ(*res.optimal_complexity, 1u);
  EXPECT_EQ(res.optimal_mask->bits, (std::vector<std::uint8_t>{0, 1, 0, 0}));
  EXPECT_TRUE(verify(task, *res.optimal_mask).both());
  // every mask containing position 1 is feasible, and only those
  EXPECT_EQ(res.feasible_count, 8u);
}

TEST(Oracle, ConstantRecommenderHasNoCounterfactual) {
  ConstantRecommender rec(6);
  auto task = make_task(Session{"c", {1, 2, 3}, ""}, rec, 2);
  ASSERT_TRUE(rec.in_topk(std::span<const ItemId>{}, task.target, 2));
  auto res = solve_exact(task);
  EXPECT_FALSE(res.feasible);
  EXPECT_FALSE(res.optimal_mask.has_value());
  EXPECT_FALSE(res.optimal_complexity.has_value());
  EXPECT_EQ(res.enumerated, 8u);
}

TEST(Oracle, LengthLimit) {
  ConstantRecommender rec(4);
  Session s{"long", std::vector<ItemId>(21, 1), ""};
  auto task = make_task(s, rec, 1);
  EXPECT_THROW(solve_exact(task), LengthLimitError);
  EXPECT_THROW(solve_exact(make_task(Session{"x", {1, 2, 3}, ""}, rec, 1), 2), LengthLimitError);
}

TEST(Oracle, TiesResolveToLexicographicallySmallestMask) {
  // Item 9 outranks the constant 1.5 of every other item once the input holds
  // at least two copies of item 2.
  class CountRecommender final : public Recommender {
   public:
    std::string kind() const override { return "count"; }
    const Catalog& catalog() const override { return catalog_; }
    std::size_t embed_dim() const override { return 1; }
    std::vector<double> encode(std::span<const ItemId>) const override { return {0.0}; }
    std::vector<double> scores(std::span<const ItemId> items) const override {
      std::vector<double> s(10, 1.5);
      s[9] = static_cast<double>(std::count(items.begin(), items.end(), ItemId{2}));
      return s;
    }
    Catalog catalog_{10};
  } rec;
  auto task = make_task(Session{"t", {2, 2, 2}, ""}, rec, 1);
  ASSERT_EQ(task.target, 9u);
  for (auto order : {EnumerationOrder::forward, EnumerationOrder::reverse}) {
    auto res = solve_exact(task, 20, 1, order);
    ASSERT_TRUE(res.feasible);
    // 110, 101 and 011 are all optimal
    EXPECT_EQ(res.feasible_count, 4u);
    EXPECT_EQ(res.optimal_mask->bits, (std::vector<std::uint8_t>{0, 1, 1}));
  }
}

TEST(Verify, DegenerateMasks) {
  PresenceRecommender rec(10, 3, 9);
  auto task = make_task(Session{"p", {5, 3, 6}, ""}, rec, 2);
  const bool empty_hit = rec.in_topk(std::span<const ItemId>{}, task.target, 2);
  EXPECT_EQ(verify(task, Mask::zeros(3)).factual_ok, empty_hit);
  EXPECT_EQ(verify(task, Mask::ones(3)).counterfactual_ok, !empty_hit);
}

TEST(Oracle, DuplicatedDecisiveItemNeedsEveryCopy) {
  PresenceRecommender rec(10, 3, 9);
  auto task = make_task(Session{"p", {3, 4, 3}, ""}, rec, 2);
  auto res = solve_exact(task);
  ASSERT_TRUE(res.feasible);
  // one copy alone leaves the other in the remainder
  EXPECT_EQ(res.optimal_mask->bits, (std::vector<std::uint8_t>{1, 0, 1}));
}

TEST(Oracle, ForwardReverseAndWorkersAgree) {
  SynthSpec spec;
  spec.n_items = 30;
  spec.n_sessions = 40;
  spec.min_len = 3;
  spec.max_len = 9;
  spec.n_rules = 5;
  spec.seed = 12;
  auto data = generate_synthetic(spec);
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  for (const auto& s : data.split.train) {
    auto task = make_task(s, rec, 5);
    auto a = solve_exact(task, 20, 1, EnumerationOrder::forward);
    auto b = solve_exact(task, 20, 1, EnumerationOrder::reverse);
    auto c = solve_exact(task, 20, 4, EnumerationOrder::forward);
    ASSERT_EQ(a.feasible, b.feasible);
    ASSERT_EQ(a.optimal_complexity, b.optimal_complexity);
    ASSERT_EQ(a.optimal_mask, b.optimal_mask);
    ASSERT_EQ(a.feasible_count, b.feasible_count);
    ASSERT_EQ(a.optimal_mask, c.optimal_mask);
    if (a.feasible) {
      ASSERT_TRUE(verify(task, *a.optimal_mask).both());
    }
  }
}
