#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cf2rec/data.hpp"
#include "cf2rec/markov.hpp"
#include "cf2rec/policy.hpp"
#include "gradcheck.hpp"

using namespace cf2rec;

namespace {

ParamStore zero_head(std::size_t in, std::size_t hidden) {
  auto p = PolicyNet::init(in, hidden, 1);
  for (auto& v : p.theta.at(kPolicyW).data) v = 0.0;
  return p.theta;
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_items = 20;
  s.n_sessions = 40;
  s.min_len = 4;
  s.max_len = 6;
  s.n_rules = 4;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(ActionProb, ZeroHeadIsOneHalf) {
  auto theta = zero_head(3, 4);
  const std::vector<double> s{0.3, 1.2, 0.0, 4.0};
  EXPECT_EQ(action_prob(theta, s), 0.5);
}

TEST(ActionProb, SaturatesAndComplements) {
  auto theta = zero_head(3, 2);
  theta.at(kPolicyW).at(1, 0) = 1000.0;
  const std::vector<double> s{1.0, 0.0};
  EXPECT_NEAR(action_prob(theta, s), 1.0, 1e-12);
  theta.at(kPolicyW).at(1, 0) = 0.7;
  const std::vector<double> f{0.4, 0.1, -0.3};
  const double p1 = std::exp(log_prob(theta, f, 1));
  const double p0 = std::exp(log_prob(theta, f, 0));
  EXPECT_NEAR(p1 + p0, 1.0, 1e-12);
}

TEST(ActionProb, NonFiniteStateIsNumericError) {
  auto theta = zero_head(3, 2);
  const std::vector<double> s{std::nan(""), 0.0};
  EXPECT_THROW(action_prob(theta, s), NumericError);
}

TEST(SelectAction, GreedyThresholdIsStrict) {
  Rng rng(0);
  EXPECT_EQ(select_action(0.5, ActionMode::greedy, rng), 0);
  EXPECT_EQ(select_action(0.9, ActionMode::greedy, rng), 1);
  EXPECT_EQ(select_action(0.5000001, ActionMode::greedy, rng), 1);
}

TEST(SelectAction, SampleIsReproducible) {
  Rng a(42), b(42);
  std::vector<int> xs, ys;
  for (int i = 0; i < 100; ++i) {
    xs.push_back(select_action(0.3, ActionMode::sample, a));
    ys.push_back(select_action(0.3, ActionMode::sample, b));
  }
  EXPECT_EQ(xs, ys);
}

TEST(DiscountedReturns, HandComputed) {
  const std::vector<double> r{1, 1};
  EXPECT_EQ(discounted_returns(r, 0.5), (std::vector<double>{1.5, 1.0}));
  const std::vector<double> r2{0.3, 0.0, 2.0};
  EXPECT_EQ(discounted_returns(r2, 0.0), r2);
  EXPECT_EQ(discounted_returns(std::vector<double>{0, 0, 2}, 1.0), (std::vector<double>{2, 2, 2}));
  EXPECT_THROW(discounted_returns(std::vector<double>{}, 0.9), std::invalid_argument);
}

TEST(LogProb, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  std::size_t checked = 0;
  for (int inst = 0; inst < 5; ++inst) {
    const std::size_t in = 4 + inst, hidden = 3 + inst;
    auto policy = PolicyNet::init(in, hidden, 200 + inst);
    for (auto& v : policy.theta.at(kPolicyW).data) v = normal(rng, 1.0);
    std::vector<double> x(in);
    for (auto& v : x) v = normal(rng, 1.0);
    const int action = inst % 2;
    auto grad = zeros_like(policy.theta);
    log_prob(policy.theta, x, action, &grad);
    checked +=
        testing_util::check_gradient(policy.theta, grad, [&] { return log_prob(policy.theta, x, action); }, rng, 6);
  }
  EXPECT_GE(checked, 20u);
}

TEST(Reinforce, EqualReturnsWithBaselineLeaveParamsUnchanged) {
  auto policy = PolicyNet::init(3, 4, 9);
  const auto before = policy.theta;
  std::vector<Episode> eps(3);
  for (int i = 0; i < 3; ++i) {
    eps[i].features = {{0.1 * i, 1.0, -0.5}};
    eps[i].actions = {i % 2};
    eps[i].probs = {0.5};
    eps[i].rewards = {2.0};
  }
  TrainerConfig cfg;
  cfg.learning_rate = 0.5;
  auto res = reinforce_update(policy, eps, cfg);
  EXPECT_EQ(policy.theta, before);
  EXPECT_EQ(res.loss, -2.0);
}

TEST(Reinforce, OneStateBanditConverges) {
  auto policy = PolicyNet::init(2, 4, 3);
  const std::vector<double> x{1.0, 0.5};
  TrainerConfig cfg;
  cfg.learning_rate = 0.1;
  Rng rng(8);
  auto include_prob = [&] { return action_prob(policy.theta, preprocess_state(policy.theta, x)); };
  std::size_t updates = 0;
  for (; updates < 2000 && include_prob() <= 0.95; ++updates) {
    std::vector<Episode> batch(16);
    for (auto& ep : batch) {
      const double p = include_prob();
      const int a = select_action(p, ActionMode::sample, rng);
      ep.features = {x};
      ep.actions = {a};
      ep.probs = {p};
      ep.rewards = {a == 1 ? 1.0 : 0.0};
    }
    reinforce_update(policy, batch, cfg);
  }
  EXPECT_GT(include_prob(), 0.95) << "after " << updates << " updates";
}

TEST(TrainExplainer, ZeroBudgetReturnsInitialParams) {
  auto data = generate_synthetic(small_spec(1));
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  TrainerConfig cfg;
  cfg.max_episodes = 0;
  cfg.seed = 4;
  auto out = train_explainer(data.split.train, rec, EnvConfig{}, cfg);
  const auto d = rec.embed_dim();
  auto fresh = PolicyNet::init(state_input_dim(d, true), d, derive_seed(cfg.seed, "policy-init"));
  EXPECT_EQ(out.policy.theta, fresh.theta);
  EXPECT_TRUE(out.log.rows.empty());
}

TEST(TrainExplainer, LogIsReproducibleAndWorkerIndependent) {
  auto data = generate_synthetic(small_spec(2));
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  TrainerConfig cfg;
  cfg.max_episodes = 200;
  cfg.learning_rate = 0.01;
  cfg.seed = 17;
  auto run = [&](std::size_t workers) {
    auto c = cfg;
    c.workers = workers;
    auto out = train_explainer(data.split.train, rec, EnvConfig{}, c);
    std::ostringstream os;
    write_training_log_csv(os, out.log);
    return std::pair{os.str(), out.policy.theta};
  };
  const auto a = run(1), b = run(1), c = run(4);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.first, c.first);
  EXPECT_EQ(a.second, c.second);
  EXPECT_EQ(a.first.substr(0, a.first.find('\n')), "episode,mean_reward,r_fe_rate,r_cfe_rate,mean_complexity,loss");
}

TEST(TrainExplainer, BeatsRandomPolicyOnPlantedData) {
  auto spec = small_spec(3);
  auto data = generate_synthetic(spec);
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  EnvConfig env_cfg;
  env_cfg.k = 5;
  TrainerConfig cfg;
  cfg.max_episodes = 3000;
  cfg.learning_rate = 0.05;
  cfg.seed = 5;
  auto trained = train_explainer(data.split.train, rec, env_cfg, cfg);

  // Monte-Carlo reward of a uniform include/exclude policy on the same sessions.
  Rng rng(99);
  double random_total = 0.0, policy_total = 0.0;
  std::size_t n = 0;
  for (const auto& s : data.split.train) {
    auto task = make_task(s, rec, env_cfg.k);
    ExplainEnv env(task, trained.policy.theta, env_cfg);
    for (int rep = 0; rep < 20; ++rep) {
      random_total += rollout(env, [&](const EpisodeState&) {
                        return std::pair<double, int>{0.5, uniform01(rng) < 0.5 ? 1 : 0};
                      }).terminal.total;
      policy_total += rollout(env, trained.policy.theta, ActionMode::sample, rng).terminal.total;
      ++n;
    }
  }
  EXPECT_GT(policy_total / n, random_total / n);
}

TEST(Explain, ScriptedToyTraceAndIdempotence) {
  const std::size_t v = 8;
  std::vector<double> t(v * v, 0.0);
  t[4 * v + 7] = 5.0;
  MarkovCountRecommender rec(Catalog(v), t, std::vector<double>{1, 1, 1, 1, 1, 1, 1, 0}, 1.0);
  auto task = make_task(Session{"toy", {0, 1, 2, 3, 4}, ""}, rec, 1);
  auto policy = PolicyNet::init(state_input_dim(v, true), 4, 1);
  ExplainEnv env(task, policy.theta);
  const int script[] = {1, 0, 0, 1, 1};
  auto ep = rollout(env, [&](const EpisodeState& st) { return std::pair<double, int>{0.5, script[st.t]}; });
  EXPECT_EQ(apply_mask(task.session, ep.mask).selected, (std::vector<ItemId>{0, 3, 4}));

  const auto a = explain(policy, task);
  const auto b = explain(policy, task);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.trace.size(), 5u);
  EXPECT_EQ(a.complexity, mask_complexity(a.mask));
}

TEST(Explain, TrainedPolicyKeepsDecisiveLastItem) {
  auto spec = small_spec(6);
  auto data = generate_synthetic(spec);
  auto rec = MarkovCountRecommender::fit(data.split.catalog, data.split.train, 0.1);
  EnvConfig env_cfg;
  env_cfg.k = 5;
  TrainerConfig cfg;
  cfg.max_episodes = 3000;
  cfg.learning_rate = 0.05;
  cfg.seed = 6;
  auto trained = train_explainer(data.split.train, rec, env_cfg, cfg);
  std::size_t decisive = 0, kept = 0;
  for (const auto& s : data.split.train) {
    auto task = make_task(s, rec, env_cfg.k);
    std::vector<ItemId> without_last(s.items.begin(), s.items.end() - 1);
    if (rec.in_topk(without_last, task.target, env_cfg.k)) continue;
    ++decisive;
    auto r = explain(trained.policy, task, env_cfg);
    kept += r.mask.bits.back();
  }
  ASSERT_GT(decisive, 0u);
  EXPECT_EQ(kept, decisive);
}
