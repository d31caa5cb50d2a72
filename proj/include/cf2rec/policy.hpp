#pragma once

// Stochastic include/exclude policy and its REINFORCE trainer.
//
// theta = { state.W1, state.b1 } (state preprocessor) + { policy.W } (2 x h)
// pi(a=1 | s) = sigmoid(W[1].s - W[0].s)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/env.hpp"
#include "cf2rec/format.hpp"
#include "cf2rec/parallel.hpp"
#include "cf2rec/random.hpp"

namespace cf2rec {

inline constexpr const char* kPolicyW = "policy.W";

enum class ActionMode { sample, greedy };

struct PolicyNet {
  ParamStore theta;

  std::size_t input_dim() const { return theta.at(kStateW1).cols(); }
  std::size_t hidden_dim() const { return theta.at(kStateW1).rows(); }

  static PolicyNet init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0) throw std::invalid_argument("policy dimensions must be positive");
    Rng rng(seed);
    Tensor w1({hidden_dim, input_dim});
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (auto& v : w1.data) v = normal(rng, s1);
    Tensor b1({hidden_dim}, 0.01);
    Tensor w({2, hidden_dim});
    const double s2 = 0.1 / std::sqrt(static_cast<double>(hidden_dim));
    for (auto& v : w.data) v = normal(rng, s2);
    PolicyNet p;
    p.theta.emplace(kStateW1, std::move(w1));
    p.theta.emplace(kStateB1, std::move(b1));
    p.theta.emplace(kPolicyW, std::move(w));
    return p;
  }
};

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Difference of the two action scores, W[1].s - W[0].s.
inline double action_logit(const ParamStore& theta, std::span<const double> state) {
  if (!all_finite(state)) throw NumericError("non-finite policy state");
  const auto& w = theta.at(kPolicyW);
  if (w.cols() != state.size()) throw std::invalid_argument("policy state width mismatch");
  return dot(w.row(1), state) - dot(w.row(0), state);
}

/// Probability of the include action.
inline double action_prob(const ParamStore& theta, std::span<const double> state) {
  return sigmoid(action_logit(theta, state));
}

/// Greedy includes only when the probability strictly exceeds one half.
inline int select_action(double include_prob, ActionMode mode, Rng& rng) {
  if (mode == ActionMode::greedy) return include_prob > 0.5 ? 1 : 0;
  return uniform01(rng) < include_prob ? 1 : 0;
}

inline int select_action(const ParamStore& theta, std::span<const double> state, ActionMode mode, Rng& rng) {
  return select_action(action_prob(theta, state), mode, rng);
}

/// G_t = sum_{k >= t} gamma^(k - t) r_k.
inline std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("reward sequence must be non-empty");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

/// log pi(action | x) through the full preprocessor + head. When grad is
/// non-null, scale * d/dtheta log pi is accumulated into it.
inline double log_prob(const ParamStore& theta, std::span<const double> features, int action,
                       ParamStore* grad = nullptr, double scale = 1.0) {
  const auto& w1 = theta.at(kStateW1);
  const auto& b1 = theta.at(kStateB1);
  const auto& w = theta.at(kPolicyW);
  const auto h = w1.rows();
  std::vector<double> pre(h), s(h);
  for (std::size_t r = 0; r < h; ++r) {
    pre[r] = dot(w1.row(r), features) + b1.data[r];
    s[r] = std::max(0.0, pre[r]);
  }
  const double z = action_logit(theta, s);
  // log sigmoid(z) and log(1 - sigmoid(z)) without overflow
  const double lp = action == 1 ? -std::log1p(std::exp(-std::abs(z))) + std::min(z, 0.0)
                                : -std::log1p(std::exp(-std::abs(z))) - std::max(z, 0.0);
  if (grad) {
    const double dz = scale * (static_cast<double>(action) - sigmoid(z));
    auto& gw = grad->at(kPolicyW);
    auto& gw1 = grad->at(kStateW1);
    auto& gb1 = grad->at(kStateB1);
    for (std::size_t r = 0; r < h; ++r) {
      gw.at(1, r) += dz * s[r];
      gw.at(0, r) -= dz * s[r];
      if (pre[r] <= 0.0) continue;
      const double dh = dz * (w.at(1, r) - w.at(0, r));
      gb1.data[r] += dh;
      auto row = gw1.row(r);
      for (std::size_t c = 0; c < features.size(); ++c) row[c] += dh * features[c];
    }
  }
  return lp;
}

struct Episode {
  std::vector<std::vector<double>> features;
  std::vector<int> actions;
  std::vector<double> probs;
  std::vector<double> rewards;  // zero except at the terminal step
  RewardBreakdown terminal;
  Mask mask;
};

/// Drives one episode; choose(state) returns the include probability and the
/// action taken.
template <typename Chooser>
Episode rollout(const ExplainEnv& env, Chooser&& choose) {
  Episode ep;
  auto st = env.reset();
  while (!st.terminal(env.length())) {
    const auto [prob, action] = choose(st);
    ep.features.push_back(st.features);
    ep.actions.push_back(action);
    ep.probs.push_back(prob);
    auto res = env.step(st, action);
    ep.rewards.push_back(res.reward ? res.reward->total : 0.0);
    if (res.reward) ep.terminal = *res.reward;
    st = std::move(res.state);
  }
  ep.mask = Mask(st.partial_mask);
  return ep;
}

inline Episode rollout(const ExplainEnv& env, const ParamStore& theta, ActionMode mode, Rng& rng) {
  return rollout(env, [&](const EpisodeState& st) {
    const double p = action_prob(theta, st.state_vector);
    return std::pair<double, int>{p, select_action(p, mode, rng)};
  });
}

struct TrainerConfig {
  double gamma = 0.95;
  double learning_rate = 1e-3;
  std::optional<std::size_t> max_episodes;  // default 50 * number of sessions
  std::size_t batch_size = 32;
  std::size_t reward_window = 100;
  double reward_tol = 0.0;  // 0 disables the reward-convergence stop
  double param_tol = 0.0;   // 0 disables the parameter-convergence stop
  bool baseline = true;
  std::size_t hidden_dim = 0;  // 0 means d
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct PolicyGradient {
  ParamStore grad;    // ascent direction of the surrogate objective
  double loss = 0.0;  // -Q(theta): negated mean discounted episode return
  double baseline = 0.0;
};

/// REINFORCE estimate (1/N) sum_ep sum_t grad log pi(a_t|s_t) (G_t - b), with
/// b the batch-mean return when enabled.
inline PolicyGradient policy_gradient(const ParamStore& theta, std::span<const Episode> episodes,
                                      const TrainerConfig& cfg) {
  if (episodes.empty()) throw std::invalid_argument("REINFORCE batch must be non-empty");
  std::vector<std::vector<double>> returns;
  returns.reserve(episodes.size());
  double sum_g = 0.0, sum_g0 = 0.0;
  std::size_t steps = 0;
  for (const auto& ep : episodes) {
    returns.push_back(discounted_returns(ep.rewards, cfg.gamma));
    for (double g : returns.back()) sum_g += g;
    sum_g0 += returns.back().front();
    steps += ep.rewards.size();
  }
  PolicyGradient out;
  out.grad = zeros_like(theta);
  out.baseline = cfg.baseline ? sum_g / static_cast<double>(steps) : 0.0;
  out.loss = -sum_g0 / static_cast<double>(episodes.size());
  const double inv_n = 1.0 / static_cast<double>(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      const double adv = returns[e][t] - out.baseline;
      if (adv == 0.0) continue;
      log_prob(theta, ep.features[t], ep.actions[t], &out.grad, adv * inv_n);
    }
  }
  return out;
}

struct UpdateResult {
  double loss = 0.0;
  double delta_norm = 0.0;
};

/// One gradient-ascent step on the REINFORCE objective.
inline UpdateResult reinforce_update(PolicyNet& policy, std::span<const Episode> episodes, const TrainerConfig& cfg) {
  auto pg = policy_gradient(policy.theta, episodes, cfg);
  apply_grads(policy.theta, pg.grad, -cfg.learning_rate);
  return {pg.loss, cfg.learning_rate * std::sqrt(squared_norm(pg.grad))};
}

struct TrainingLogRow {
  std::size_t episode = 0;
  double mean_reward = 0.0;
  double r_fe_rate = 0.0;
  double r_cfe_rate = 0.0;
  double mean_complexity = 0.0;
  double loss = 0.0;
  bool operator==(const TrainingLogRow&) const = default;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  std::size_t updates = 0;
  std::size_t skipped_sessions = 0;
  std::string stop_reason = "max_episodes";
};

inline void write_training_log_csv(std::ostream& os, const TrainingLog& log) {
  os << "episode,mean_reward,r_fe_rate,r_cfe_rate,mean_complexity,loss\n";
  for (const auto& r : log.rows) {
    os << r.episode << ',' << fmt_num(r.mean_reward) << ',' << fmt_num(r.r_fe_rate) << ',' << fmt_num(r.r_cfe_rate)
       << ',' << fmt_num(r.mean_complexity) << ',' << fmt_num(r.loss) << '\n';
  }
}

struct TrainedExplainer {
  PolicyNet policy;
  TrainingLog log;
};

/// Trains the policy against a frozen recommender. Episodes are grouped into
/// batches of cfg.batch_size; episode e samples actions from its own seeded
/// stream, so results do not depend on cfg.workers.
inline TrainedExplainer train_explainer(std::span<const Session> sessions, const Recommender& rec,
                                        const EnvConfig& env_cfg, const TrainerConfig& cfg) {
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (cfg.reward_window == 0) throw std::invalid_argument("reward window must be at least 1");
  if (cfg.reward_tol < 0.0 || cfg.param_tol < 0.0) throw std::invalid_argument("tolerances must be non-negative");

  TrainedExplainer out;
  std::vector<ExplainTask> tasks;
  for (const auto& s : sessions) {
    if (s.size() < 2) {
      ++out.log.skipped_sessions;
      continue;
    }
    tasks.push_back(make_task(s, rec, env_cfg.k));
  }
  const auto d = rec.embed_dim();
  const auto hidden = cfg.hidden_dim == 0 ? d : cfg.hidden_dim;
  out.policy = PolicyNet::init(state_input_dim(d, env_cfg.step_features), hidden, derive_seed(cfg.seed, "policy-init"));

  const std::size_t budget = cfg.max_episodes.value_or(50 * tasks.size());
  if (budget == 0 || tasks.empty()) return out;

  Rng order_rng(derive_seed(cfg.seed, "episode-order"));
  const auto episode_seed = derive_seed(cfg.seed, "episode-actions");
  std::vector<std::size_t> order(tasks.size());
  std::size_t cursor = order.size();

  struct Window {
    std::deque<std::pair<RewardBreakdown, std::size_t>> items;
    double reward = 0, fe = 0, cfe = 0, cx = 0;
  } window;
  std::optional<double> previous_avg;
  std::size_t done = 0;

  while (done < budget) {
    const std::size_t n = std::min(cfg.batch_size, budget - done);
    std::vector<std::size_t> batch_tasks(n);
    for (auto& idx : batch_tasks) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      idx = order[cursor++];
    }
    std::vector<Episode> episodes(n);
    const ParamStore& theta = out.policy.theta;
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      ExplainEnv env(tasks[batch_tasks[i]], theta, env_cfg);
      Rng rng(derive_seed(episode_seed, static_cast<std::uint64_t>(done + i)));
      episodes[i] = rollout(env, theta, ActionMode::sample, rng);
    });
    const auto upd = reinforce_update(out.policy, episodes, cfg);
    ++out.log.updates;

    for (const auto& ep : episodes) {
      const auto cx = mask_complexity(ep.mask);
      window.items.emplace_back(ep.terminal, cx);
      window.reward += ep.terminal.total;
      window.fe += ep.terminal.r_fe;
      window.cfe += ep.terminal.r_cfe;
      window.cx += static_cast<double>(cx);
      if (window.items.size() > cfg.reward_window) {
        const auto& [old, old_cx] = window.items.front();
        window.reward -= old.total;
        window.fe -= old.r_fe;
        window.cfe -= old.r_cfe;
        window.cx -= static_cast<double>(old_cx);
        window.items.pop_front();
      }
      const double m = static_cast<double>(window.items.size());
      ++done;
      out.log.rows.push_back({done, window.reward / m, window.fe / m, window.cfe / m, window.cx / m, upd.loss});
    }

    if (cfg.param_tol > 0.0 && upd.delta_norm < cfg.param_tol) {
      out.log.stop_reason = "param_converged";
      break;
    }
    const double avg = out.log.rows.back().mean_reward;
    if (cfg.reward_tol > 0.0 && done >= 2 * cfg.reward_window && previous_avg &&
        std::abs(avg - *previous_avg) < cfg.reward_tol) {
      out.log.stop_reason = "reward_converged";
      break;
    }
    previous_avg = avg;
  }
  return out;
}

/// Greedy rollout of a trained policy, with verdicts and per-step trace.
inline ExplanationRecord explain(const PolicyNet& policy, const ExplainTask& task, const EnvConfig& env_cfg = {}) {
  ExplainEnv env(task, policy.theta, env_cfg);
  Rng unused_rng(0);
  const auto ep = rollout(env, policy.theta, ActionMode::greedy, unused_rng);
  ExplanationRecord rec;
  rec.session_id = task.session.session_id;
  rec.items = task.session.items;
  rec.target = task.target;
  rec.mask = ep.mask;
  rec.factual_ok = ep.terminal.r_fe == 1.0;
  rec.counterfactual_ok = ep.terminal.r_cfe == 1.0;
  rec.complexity = mask_complexity(ep.mask);
  rec.rank_of_target = task.recommender->rank_of(apply_mask(task.session, ep.mask).selected, task.target);
  rec.reward = ep.terminal;
  for (std::size_t t = 0; t < ep.actions.size(); ++t) {
    rec.trace.push_back({t, ep.probs[t], ep.actions[t], ep.rewards[t]});
  }
  return rec;
}

}  // namespace cf2rec
