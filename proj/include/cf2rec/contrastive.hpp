#pragma once

// Explanation-driven contrastive fine-tuning. For each explained session the
// selected sub-session S* is a positive view of the session and the remainder
// S \ S* a negative one; remainders of the other batch members act as
// in-batch negatives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/format.hpp"
#include "cf2rec/neural.hpp"
#include "cf2rec/random.hpp"

namespace cf2rec {

enum class ContrastiveMode { both, pos_only, neg_only };

inline ContrastiveMode parse_contrastive_mode(const std::string& s) {
  if (s == "both") return ContrastiveMode::both;
  if (s == "pos_only") return ContrastiveMode::pos_only;
  if (s == "neg_only") return ContrastiveMode::neg_only;
  throw std::invalid_argument("unknown contrastive mode '" + s + "'");
}

inline std::string to_string(ContrastiveMode m) {
  switch (m) {
    case ContrastiveMode::both:
      return "both";
    case ContrastiveMode::pos_only:
      return "pos_only";
    case ContrastiveMode::neg_only:
      return "neg_only";
  }
  return "both";
}

/// Loss configuration of an ablation variant.
struct ContrastiveConfig {
  ContrastiveMode mode = ContrastiveMode::both;
  double temperature = 1.0;
};

inline ContrastiveConfig ablation_variant(ContrastiveMode mode, double temperature = 1.0) {
  return {mode, temperature};
}

struct FinetuneTriple {
  Session anchor;
  std::vector<ItemId> positive;
  std::vector<ItemId> negative;
  ItemId target = 0;
};

struct TripleSet {
  std::vector<FinetuneTriple> triples;
  std::size_t dropped = 0;
};

/// One triple per record whose selected sub-session is non-empty.
inline TripleSet build_triples(std::span<const ExplanationRecord> records, std::span<const Session> sessions) {
  std::map<std::string, const Session*> by_id;
  for (const auto& s : sessions) by_id.emplace(s.session_id, &s);
  TripleSet out;
  for (const auto& r : records) {
    auto it = by_id.find(r.session_id);
    if (it == by_id.end()) throw std::invalid_argument("explanation for unknown session '" + r.session_id + "'");
    const Session& s = *it->second;
    if (s.items != r.items) throw std::invalid_argument("explanation items differ from session '" + r.session_id + "'");
    auto view = apply_mask(s, r.mask);
    if (view.selected.empty()) {
      ++out.dropped;
      continue;
    }
    out.triples.push_back({s, std::move(view.selected), std::move(view.remainder), r.target});
  }
  return out;
}

struct ContrastiveResult {
  double loss = 0.0;
  ParamStore grads;
  std::size_t zero_norm_warnings = 0;
};

namespace detail {

struct Cosine {
  double value = 0.0;
  bool degenerate = false;
};

inline Cosine cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {dot(a, b) / (na * nb), false};
}

// Accumulates w * d cos(a, b) / da into ga and w * d cos(a, b) / db into gb.
inline void cosine_backward(std::span<const double> a, std::span<const double> b, double w, std::vector<double>& ga,
                            std::vector<double>& gb) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0 || w == 0.0) return;
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ga[i] += w * (b[i] / (na * nb) - c * a[i] / (na * na));
    gb[i] += w * (a[i] / (na * nb) - c * b[i] / (nb * nb));
  }
}

}  // namespace detail

/// Loss of one anchor given its scaled positive logit and negative logits.
inline double contrastive_sample_loss(double pos_logit, std::span<const double> neg_logits, ContrastiveMode mode) {
  if (mode == ContrastiveMode::pos_only) return -pos_logit;
  const bool with_pos = mode == ContrastiveMode::both;
  double mx = with_pos ? pos_logit : -std::numeric_limits<double>::infinity();
  for (double l : neg_logits) mx = std::max(mx, l);
  double z = with_pos ? std::exp(pos_logit - mx) : 0.0;
  for (double l : neg_logits) z += std::exp(l - mx);
  return mx + std::log(z) - (with_pos ? pos_logit : 0.0);
}

/// Batch-mean contrastive loss and its gradient w.r.t. recommender params.
///
///   both:     l_i = -log( e^{p_i} / (e^{p_i} + sum_k e^{n_ik}) )
///   pos_only: l_i = -p_i
///   neg_only: l_i = log sum_k e^{n_ik}
///
/// with p_i = cos(e_S^i, e_S*^i)/tau and n_ik = cos(e_S^i, e_{S\S*}^k)/tau.
/// A zero-norm embedding contributes similarity 0 and is counted.
inline ContrastiveResult contrastive_loss(std::span<const FinetuneTriple> batch, const Recommender& rec,
                                          const ContrastiveConfig& cfg = {}) {
  if (batch.size() < 2) throw std::invalid_argument("contrastive batch needs at least two triples");
  if (!(cfg.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!rec.trainable()) throw UnsupportedOperation(rec.kind() + " recommender is not trainable");
  const auto n = batch.size();
  const auto d = rec.embed_dim();
  const double tau = cfg.temperature;
  std::vector<std::vector<double>> ea(n), ep(n), en(n);
  for (std::size_t i = 0; i < n; ++i) {
    ea[i] = rec.encode(batch[i].anchor.items);
    ep[i] = rec.encode(batch[i].positive);
    en[i] = rec.encode(batch[i].negative);
  }
  ContrastiveResult out;
  out.grads = zeros_like(rec.params());
  std::vector<std::vector<double>> ga(n, std::vector<double>(d)), gp = ga, gn = ga;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = detail::cosine(ea[i], ep[i]);
    out.zero_norm_warnings += pos.degenerate ? 1 : 0;
    const double p = pos.value / tau;
    if (cfg.mode == ContrastiveMode::pos_only) {
      out.loss -= p * inv_n;
      detail::cosine_backward(ea[i], ep[i], -inv_n / tau, ga[i], gp[i]);
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto neg = detail::cosine(ea[i], en[k]);
      out.zero_norm_warnings += neg.degenerate ? 1 : 0;
      logits[k] = neg.value / tau;
    }
    const bool with_pos = cfg.mode == ContrastiveMode::both;
    double mx = *std::max_element(logits.begin(), logits.end());
    if (with_pos) mx = std::max(mx, p);
    double z = with_pos ? std::exp(p - mx) : 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    out.loss += (lse - (with_pos ? p : 0.0)) * inv_n;
    if (with_pos) {
      const double wp = (std::exp(p - lse) - 1.0) * inv_n / tau;
      detail::cosine_backward(ea[i], ep[i], wp, ga[i], gp[i]);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double wk = std::exp(logits[k] - lse) * inv_n / tau;
      detail::cosine_backward(ea[i], en[k], wk, ga[i], gn[k]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    rec.encode_backward(batch[i].anchor.items, ga[i], out.grads);
    rec.encode_backward(batch[i].positive, gp[i], out.grads);
    rec.encode_backward(batch[i].negative, gn[i], out.grads);
  }
  return out;
}

struct FinetuneConfig {
  double lambda = 0.5;
  double temperature = 1.0;
  ContrastiveMode mode = ContrastiveMode::both;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

struct EpochLoss {
  std::size_t epoch = 0;
  double l_rec = 0.0;
  double l_c = 0.0;
  double total = 0.0;
};

struct FinetuneResult {
  std::vector<EpochLoss> curve;
  std::size_t zero_norm_warnings = 0;
};

inline void write_loss_curve_csv(std::ostream& os, std::span<const EpochLoss> curve) {
  os << "epoch,l_rec,l_c,total\n";
  for (const auto& e : curve) {
    os << e.epoch << ',' << fmt_num(e.l_rec) << ',' << fmt_num(e.l_c) << ',' << fmt_num(e.total) << '\n';
  }
}

/// Minimises L_rec + lambda * L_c by mini-batch gradient descent. The
/// next-item examples are shuffled exactly as train_recommender does with the
/// same seed; triples draw from a separate stream, so lambda = 0 reproduces
/// plain training bit for bit.
inline FinetuneResult finetune(Recommender& rec, std::span<const FinetuneTriple> triples,
                               std::span<const Session> train_sessions, const FinetuneConfig& cfg) {
  if (!rec.trainable()) throw UnsupportedOperation(rec.kind() + " recommender is not trainable");
  if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  if (cfg.batch_size < 2) throw std::invalid_argument("fine-tune batch size must be at least 2");
  if (triples.size() < 2) throw std::invalid_argument("fine-tuning needs at least two explanation triples");
  auto examples = make_examples(train_sessions);
  FinetuneResult out;
  if (examples.empty() || cfg.epochs == 0) return out;

  const ContrastiveConfig ccfg{cfg.mode, cfg.temperature};
  Rng rng(cfg.seed);
  Rng triple_rng(derive_seed(cfg.seed, "triples"));
  std::vector<std::size_t> order(triples.size());
  std::size_t cursor = order.size();
  const std::size_t triple_batch = std::min(cfg.batch_size, triples.size());
  std::vector<FinetuneTriple> tb;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    double sum_rec = 0.0, sum_c = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
      const auto end = std::min(examples.size(), start + cfg.batch_size);
      auto [l_rec, grads] =
          rec.rec_loss_and_grads(std::span<const TrainingExample>(examples).subspan(start, end - start));
      tb.clear();
      while (tb.size() < triple_batch) {
        if (cursor == order.size()) {
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::shuffle(order.begin(), order.end(), triple_rng);
          cursor = 0;
        }
        tb.push_back(triples[order[cursor++]]);
      }
      auto c = contrastive_loss(tb, rec, ccfg);
      out.zero_norm_warnings += c.zero_norm_warnings;
      if (cfg.lambda > 0.0) accumulate(grads, c.grads, cfg.lambda);
      rec.apply_grads(grads, cfg.learning_rate);
      sum_rec += l_rec;
      sum_c += c.loss;
      ++batches;
    }
    const double b = static_cast<double>(batches);
    out.curve.push_back({epoch + 1, sum_rec / b, sum_c / b, sum_rec / b + cfg.lambda * sum_c / b});
  }
  return out;
}

}  // namespace cf2rec
