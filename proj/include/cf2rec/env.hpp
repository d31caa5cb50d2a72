#pragma once

// Sequential explanation environment. An episode walks a session left to
// right; each step decides whether the current item joins the explanation
// S*. The terminal step pays the four-term reward computed on the final mask.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/core.hpp"
#include "cf2rec/errors.hpp"
#include "cf2rec/recommender.hpp"
#include "cf2rec/tensor.hpp"

namespace cf2rec {

inline constexpr const char* kStateW1 = "state.W1";
inline constexpr const char* kStateB1 = "state.b1";

/// Number of per-step probe features appended to the state input when
/// step features are enabled (see EpisodeState::features).
inline constexpr std::size_t kProbeFeatures = 5;

struct EnvConfig {
  std::size_t k = 10;
  // Reward-term toggles for ablations. Disabled terms are still reported in
  // the breakdown but do not enter the total.
  bool use_fe = true;
  bool use_cfe = true;
  bool use_sp = true;
  bool use_rank = true;
  // When false the state input is exactly e_S || e_S*. When true it also
  // carries the embedding of the item under decision and probe features.
  bool step_features = true;
};

inline std::size_t state_input_dim(std::size_t embed_dim, bool step_features) {
  return step_features ? 3 * embed_dim + kProbeFeatures : 2 * embed_dim;
}

/// A session paired with the item it is explained for.
struct ExplainTask {
  Session session;
  ItemId target = 0;
  std::size_t k = 10;
  const Recommender* recommender = nullptr;
  std::vector<double> session_embedding;
  RecList original;
};

/// The target is the top-1 item the frozen recommender gives for the full
/// session.
inline ExplainTask make_task(const Session& session, const Recommender& rec, std::size_t k) {
  if (session.size() < 2) {
    throw std::invalid_argument("session '" + session.session_id + "' is shorter than two interactions");
  }
  ExplainTask task;
  task.session = session;
  task.k = k;
  task.recommender = &rec;
  task.original = rec.topk(session, k);
  task.target = task.original.entries.front().item;
  task.session_embedding = rec.encode(session.items);
  return task;
}

/// Four-term reward of a completed mask:
///   r_fe   = 1[i* in topK(S*)]
///   r_cfe  = 1[i* not in topK(S \ S*)]
///   r_sp   = 1 / ln(|S*| + 2)
///   r_rank = 1 / ln(rank(i* | S*) + 2), rank over the full catalog
inline RewardBreakdown terminal_reward(const ExplainTask& task, const Mask& mask, const EnvConfig& cfg = {}) {
  const auto view = apply_mask(task.session, mask);
  const auto& rec = *task.recommender;
  const auto rank = rec.rank_of(view.selected, task.target);
  RewardBreakdown r;
  r.r_fe = rank <= task.k ? 1.0 : 0.0;
  r.r_cfe = rec.in_topk(view.remainder, task.target, task.k) ? 0.0 : 1.0;
  r.r_sp = 1.0 / std::log(static_cast<double>(view.selected.size()) + 2.0);
  r.r_rank = 1.0 / std::log(static_cast<double>(rank) + 2.0);
  r.total = (cfg.use_fe ? r.r_fe : 0.0) + (cfg.use_cfe ? r.r_cfe : 0.0) + (cfg.use_sp ? r.r_sp : 0.0) +
            (cfg.use_rank ? r.r_rank : 0.0);
  return r;
}

/// s = ReLU(W1 x + b1).
inline std::vector<double> preprocess_state(const ParamStore& theta, std::span<const double> x) {
  const auto& w1 = theta.at(kStateW1);
  const auto& b1 = theta.at(kStateB1);
  if (w1.cols() != x.size()) {
    throw std::invalid_argument("state input has " + std::to_string(x.size()) + " features, preprocessor expects " +
                                std::to_string(w1.cols()));
  }
  std::vector<double> s(w1.rows());
  for (std::size_t r = 0; r < s.size(); ++r) s[r] = std::max(0.0, dot(w1.row(r), x) + b1.data[r]);
  return s;
}

struct EpisodeState {
  std::size_t t = 0;
  std::vector<std::uint8_t> partial_mask;
  std::vector<ItemId> selected;  // S* so far
  std::vector<ItemId> excluded;  // items decided 0 so far
  std::vector<double> session_embedding;
  std::vector<double> selected_embedding;
  std::vector<double> features;      // preprocessor input x_t
  std::vector<double> state_vector;  // s_t

  bool terminal(std::size_t session_len) const { return t == session_len; }
};

struct StepResult {
  EpisodeState state;
  std::optional<RewardBreakdown> reward;
};

/// Single-threaded environment over one task. The recommender and the
/// preprocessor parameters are read-only for its lifetime.
class ExplainEnv {
 public:
  ExplainEnv(const ExplainTask& task, const ParamStore& theta, EnvConfig cfg = {})
      : task_(&task), theta_(&theta), cfg_(cfg) {
    cfg_.k = task.k;
  }

  const ExplainTask& task() const { return *task_; }
  const EnvConfig& config() const { return cfg_; }
  std::size_t length() const { return task_->session.size(); }

  EpisodeState reset() const {
    EpisodeState st;
    st.session_embedding = task_->session_embedding;
    st.selected_embedding.assign(task_->recommender->embed_dim(), 0.0);
    refresh(st);
    return st;
  }

  StepResult step(const EpisodeState& state, int action) const {
    if (state.terminal(length())) throw IllegalState("step called on a terminal episode state");
    if (action != 0 && action != 1) throw std::invalid_argument("action must be 0 or 1");
    StepResult out{state, std::nullopt};
    auto& st = out.state;
    const ItemId item = task_->session.items[st.t];
    st.partial_mask.push_back(static_cast<std::uint8_t>(action));
    if (action == 1) {
      st.selected.push_back(item);
      st.selected_embedding = task_->recommender->encode(st.selected);
    } else {
      st.excluded.push_back(item);
    }
    ++st.t;
    refresh(st);
    if (st.terminal(length())) out.reward = terminal_reward(*task_, Mask(st.partial_mask), cfg_);
    return out;
  }

 private:
  // Rebuilds x_t and s_t for the item at position t.
  void refresh(EpisodeState& st) const {
    const auto d = task_->recommender->embed_dim();
    st.features.assign(st.session_embedding.begin(), st.session_embedding.end());
    st.features.insert(st.features.end(), st.selected_embedding.begin(), st.selected_embedding.end());
    if (cfg_.step_features) {
      const auto n = length();
      if (st.t < n) {
        const auto& rec = *task_->recommender;
        const ItemId item = task_->session.items[st.t];
        const ItemId single[] = {item};
        auto e_item = rec.encode(single);
        st.features.insert(st.features.end(), e_item.begin(), e_item.end());
        auto excl = st.excluded;
        excl.push_back(item);
        auto sel = st.selected;
        sel.push_back(item);
        st.features.push_back(n > 1 ? static_cast<double>(st.t) / static_cast<double>(n - 1) : 0.0);
        st.features.push_back(st.t + 1 == n ? 1.0 : 0.0);
        st.features.push_back(rec.in_topk(single, task_->target, task_->k) ? 1.0 : 0.0);
        st.features.push_back(rec.in_topk(excl, task_->target, task_->k) ? 0.0 : 1.0);
        st.features.push_back(rec.in_topk(sel, task_->target, task_->k) ? 1.0 : 0.0);
      } else {
        st.features.resize(3 * d + kProbeFeatures, 0.0);
      }
    }
    st.state_vector = preprocess_state(*theta_, st.features);
  }

  const ExplainTask* task_;
  const ParamStore* theta_;
  EnvConfig cfg_;
};

}  // namespace cf2rec
