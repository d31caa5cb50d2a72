#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "cf2rec/data.hpp"
#include "cf2rec/io.hpp"
#include "cf2rec/markov.hpp"

using namespace cf2rec;

namespace {

std::vector<RawInteraction> random_log(Rng& rng, std::size_t n) {
  std::vector<RawInteraction> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"u" + std::to_string(static_cast<int>(uniform01(rng) * 5)),
                   "k" + std::to_string(static_cast<int>(uniform01(rng) * 15)),
                   static_cast<std::int64_t>(uniform01(rng) * 5 * 86400)});
  }
  return out;
}

std::vector<KeyedSession> keyed(std::vector<std::vector<std::string>> items) {
  std::vector<KeyedSession> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.push_back({"s" + std::to_string(i), "u" + std::to_string(i % 3), 0, std::move(items[i])});
  }
  return out;
}

}  // namespace

TEST(Sessionize, SameDayOneSession) {
  std::vector<RawInteraction> log{{"u", "a", 100}, {"u", "b", 50}};
  auto s = sessionize(log);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].items, (std::vector<std::string>{"b", "a"}));
}

TEST(Sessionize, TwoDaysTwoSessions) {
  std::vector<RawInteraction> log{{"u", "a", 100}, {"u", "b", 86400 + 100}};
  EXPECT_EQ(sessionize(log).size(), 2u);
}

TEST(Sessionize, MidnightBoundary) {
  const std::int64_t last_second = 19000LL * 86400 - 1;  // 23:59:59 UTC
  std::vector<RawInteraction> log{{"u", "a", last_second}, {"u", "b", last_second + 1}};
  auto s = sessionize(log);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].day, 18999);
  EXPECT_EQ(s[1].day, 19000);
}

TEST(Sessionize, EqualTimestampsKeepInputOrder) {
  std::vector<RawInteraction> log{{"u", "x", 10}, {"v", "q", 10}, {"u", "y", 10}, {"u", "z", 5}};
  auto s = sessionize(log);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].items, (std::vector<std::string>{"z", "x", "y"}));
}

TEST(Sessionize, SerializeParseRoundTrip) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto log = random_log(rng, 1 + static_cast<std::size_t>(uniform01(rng) * 40));
    std::stringstream ss;
    write_interactions_tsv(ss, log);
    auto parsed = parse_interactions_tsv(ss);
    ASSERT_EQ(parsed, log);
    ASSERT_EQ(sessionize(parsed), sessionize(log));
  }
}

TEST(ParseTsv, HeaderOptionalAndErrors) {
  std::stringstream plain("u\ta\t5\nu\tb\t6\n");
  EXPECT_EQ(parse_interactions_tsv(plain).size(), 2u);
  std::stringstream bad("u\ta\tfive\nu\tb\tsix\n");
  EXPECT_THROW(parse_interactions_tsv(bad), std::runtime_error);
  std::stringstream negative("u\ta\t-5\n");
  EXPECT_THROW(parse_interactions_tsv(negative), std::runtime_error);
  std::stringstream short_line("u\ta\n");
  EXPECT_THROW(parse_interactions_tsv(short_line), std::runtime_error);
}

TEST(Filter, DropsShortSessions) {
  auto in = keyed({{"a"}, {"a", "b"}, {"c", "d", "e"}});
  FilterConfig cfg;
  cfg.max_item_freq.reset();
  auto out = filter_sessions(in, cfg);
  ASSERT_EQ(out.sessions.size(), 2u);
  EXPECT_EQ(out.catalog.size(), 5u);
}

TEST(Filter, NoBoundsOnlyLengthFiltering) {
  auto in = keyed({{"a", "a", "a"}, {"b", "c"}});
  FilterConfig cfg;
  cfg.min_item_freq = 0;
  cfg.max_item_freq.reset();
  auto out = filter_sessions(in, cfg);
  EXPECT_EQ(out.sessions.size(), 2u);
  EXPECT_EQ(out.sessions[0].items.size(), 3u);
}

TEST(Filter, DefaultDropsItemsAboveOneHundredInteractions) {
  std::vector<std::vector<std::string>> items;
  for (int i = 0; i < 101; ++i) items.push_back({"hot", "x" + std::to_string(i % 50), "y" + std::to_string(i % 40)});
  for (int i = 0; i < 5; ++i) items.push_back({"warm", "x0", "y0"});
  auto out = filter_sessions(keyed(items), FilterConfig{});
  for (const auto& label : out.catalog.labels()) EXPECT_NE(label, "hot");
  // "warm" has 5 interactions and survives
  EXPECT_NE(std::find(out.catalog.labels().begin(), out.catalog.labels().end(), "warm"), out.catalog.labels().end());
}

TEST(Filter, MinimumFrequencyDirection) {
  auto in = keyed({{"a", "b", "rare"}, {"a", "b"}, {"a", "rare2"}});
  FilterConfig cfg;
  cfg.min_item_freq = 2;
  cfg.max_item_freq.reset();
  auto out = filter_sessions(in, cfg);
  // the third session shrinks to [a] and is dropped, which leaves a with 2
  EXPECT_EQ(out.sessions.size(), 2u);
  EXPECT_EQ(out.catalog.labels(), (std::vector<std::string>{"a", "b"}));
}

TEST(Filter, EmptyResultIsEmptyDatasetError) {
  EXPECT_THROW(filter_sessions(keyed({{"a"}, {"b"}}), FilterConfig{}), EmptyDatasetError);
}

TEST(Filter, IdempotentAndContiguousIds) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto sessions = sessionize(random_log(rng, 80));
    FilterConfig cfg;
    cfg.min_item_freq = 2;
    cfg.max_item_freq = 12;
    FilteredData once;
    try {
      once = filter_sessions(sessions, cfg);
    } catch (const EmptyDatasetError&) {
      continue;
    }
    auto twice = filter_sessions(to_keyed(once), cfg);
    ASSERT_EQ(twice.sessions, once.sessions);
    ASSERT_EQ(twice.catalog, once.catalog);
    std::set<ItemId> seen;
    for (const auto& s : once.sessions) seen.insert(s.items.begin(), s.items.end());
    ASSERT_EQ(seen.size(), once.catalog.size());
    ASSERT_EQ(*seen.rbegin(), once.catalog.size() - 1);
  }
}

TEST(Split, LastSessionPerUserGoesToTest) {
  std::vector<Session> sessions;
  for (int i = 0; i < 30; ++i) sessions.push_back({"s" + std::to_string(i), {0, 1}, "u" + std::to_string(i % 4)});
  auto d = split_sessions(sessions, Catalog(2), SplitScheme::last_session_per_user, 1);
  ASSERT_EQ(d.test.size(), 4u);
  for (const auto& s : d.test) {
    const int idx = std::stoi(s.session_id.substr(1));
    EXPECT_GE(idx, 26);
  }
  EXPECT_EQ(d.stats.n_train + d.stats.n_valid + d.stats.n_test, 30u);
  EXPECT_EQ(d.valid.size(), 3u);  // round(0.1 * 26)
  sessions[0].user_id.clear();
  EXPECT_THROW(split_sessions(sessions, Catalog(2), SplitScheme::last_session_per_user, 1), std::invalid_argument);
}

TEST(Split, RatioProportionsAndDeterminism) {
  for (std::size_t n : {10u, 17u, 99u, 200u}) {
    std::vector<Session> sessions;
    for (std::size_t i = 0; i < n; ++i) sessions.push_back({"s" + std::to_string(i), {0, 1}, ""});
    auto a = split_sessions(sessions, Catalog(2), SplitScheme::ratio, 5);
    auto b = split_sessions(sessions, Catalog(2), SplitScheme::ratio, 5);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    const double dn = static_cast<double>(n);
    EXPECT_LE(std::abs(static_cast<double>(a.train.size()) - 0.75 * dn), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(a.valid.size()) - 0.15 * dn), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(a.test.size()) - 0.10 * dn), 1.0);
    std::set<std::string> ids;
    for (const auto* part : {&a.train, &a.valid, &a.test}) {
      for (const auto& s : *part) EXPECT_TRUE(ids.insert(s.session_id).second);
    }
    EXPECT_EQ(ids.size(), n);
  }
  std::vector<Session> few(9, Session{"s", {0, 1}, ""});
  EXPECT_THROW(split_sessions(few, Catalog(2), SplitScheme::ratio, 1), std::invalid_argument);
}

TEST(Synthetic, DeterministicTriggerPredictsSuccessor) {
  SynthSpec spec;
  spec.p_trigger = 1.0;
  spec.noise = 0.0;
  spec.seed = 4;
  auto data = generate_synthetic(spec);
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  std::size_t checked = 0;
  for (const auto& rule : data.rules) {
    // only rules whose trigger was actually observed in training are learnable
    bool seen = false;
    for (const auto& s : data.split.train) {
      for (std::size_t j = 0; j + 1 < s.size(); ++j) seen |= s.items[j] == rule.trigger;
    }
    if (!seen) continue;
    const ItemId q[] = {rule.trigger};
    EXPECT_EQ(rec.topk(q, 1).items().front(), rule.successor);
    ++checked;
  }
  EXPECT_GT(checked, 0u);
  // every planted position is a trigger followed by its successor
  for (const auto* part : {&data.split.train, &data.split.valid, &data.split.test}) {
    for (const auto& s : *part) {
      for (auto p : data.trigger_positions.at(s.session_id)) {
        bool ok = false;
        for (const auto& rule : data.rules) ok |= s.items[p] == rule.trigger && s.items[p + 1] == rule.successor;
        EXPECT_TRUE(ok);
      }
    }
  }
}

TEST(Synthetic, SpecValidationAndDeterminism) {
  SynthSpec spec;
  spec.n_sessions = 0;
  EXPECT_THROW(generate_synthetic(spec), EmptyDatasetError);
  spec = SynthSpec{};
  spec.p_trigger = 0.5;
  EXPECT_THROW(generate_synthetic(spec), std::invalid_argument);
  spec = SynthSpec{};
  spec.seed = 8;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  EXPECT_EQ(a.split.train, b.split.train);
  EXPECT_EQ(a.split.test, b.split.test);
  EXPECT_EQ(a.trigger_positions, b.trigger_positions);
  EXPECT_EQ(a.split.catalog.size(), 50u);
  std::size_t total = a.split.train.size() + a.split.valid.size() + a.split.test.size();
  EXPECT_EQ(total, 200u);
  for (const auto& s : a.split.train) {
    EXPECT_GE(s.size(), 5u);
    EXPECT_LE(s.size(), 10u);
  }
  // successors are never triggers
  std::set<ItemId> triggers;
  for (const auto& r : a.rules) triggers.insert(r.trigger);
  for (const auto& r : a.rules) EXPECT_FALSE(triggers.count(r.successor));
}

TEST(Io, SessionStoreAndCatalogRoundTrip) {
  std::vector<Session> sessions{{"a", {0, 2, 1}, "u1"}, {"b", {1, 1}, ""}};
  std::stringstream ss;
  write_sessions_jsonl(ss, sessions);
  EXPECT_EQ(read_sessions_jsonl(ss), sessions);
  Catalog cat(std::vector<std::string>{"x", "y", "z"});
  std::stringstream cs;
  write_catalog_tsv(cs, cat);
  EXPECT_EQ(read_catalog_tsv(cs), cat);
}

TEST(Io, ExplanationRoundTrip) {
  ExplanationRecord r;
  r.session_id = "s";
  r.items = {3, 1, 4};
  r.target = 5;
  r.mask = Mask({1, 0, 1});
  r.factual_ok = true;
  r.complexity = 2;
  r.rank_of_target = 3;
  r.reward = RewardBreakdown{1, 0, 1.0 / std::log(4.0), 1.0 / std::log(5.0), 0.1234567890123};
  std::vector<ExplanationRecord> recs{r};
  std::stringstream ss;
  write_explanations_jsonl(ss, recs);
  auto back = read_explanations_jsonl(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
}
