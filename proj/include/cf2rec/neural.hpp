#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cf2rec/random.hpp"
#include "cf2rec/recommender.hpp"

namespace cf2rec {

inline constexpr const char* kItemEmbeddings = "item_embeddings";
inline constexpr const char* kItemBias = "item_bias";

/// Recency-weighted mean of item embeddings scored by dot product.
///
///   encode(S)   = sum_j w_j E[v_j] / sum_j w_j,   w_j = rho^(|S| - j)
///   score(S, i) = encode(S) . E[i] + b[i]
///
/// E is shared between the session encoder and the output layer.
class NeuralEmbeddingRecommender final : public Recommender {
 public:
  NeuralEmbeddingRecommender(Catalog catalog, std::size_t dim, double rho, ParamStore params)
      : catalog_(std::move(catalog)), dim_(dim), rho_(rho), params_(std::move(params)) {
    if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
    if (!(rho_ > 0.0 && rho_ <= 1.0)) throw std::invalid_argument("recency decay rho must lie in (0, 1]");
    const auto& e = params_.at(kItemEmbeddings);
    const auto& b = params_.at(kItemBias);
    if (e.shape != std::vector<std::size_t>{catalog_.size(), dim_})
      throw std::invalid_argument("item_embeddings must be |V| x d");
    if (b.shape != std::vector<std::size_t>{catalog_.size()})
      throw std::invalid_argument("item_bias must have |V| entries");
  }

  /// Gaussian-initialised embeddings (stddev init_scale), zero biases.
  static NeuralEmbeddingRecommender init(const Catalog& catalog, std::size_t dim, double rho, std::uint64_t seed,
                                         double init_scale = 0.1) {
    Rng rng(seed);
    ParamStore p;
    Tensor e({catalog.size(), dim});
    for (auto& v : e.data) v = normal(rng, init_scale);
    p.emplace(kItemEmbeddings, std::move(e));
    p.emplace(kItemBias, Tensor({catalog.size()}));
    return NeuralEmbeddingRecommender(catalog, dim, rho, std::move(p));
  }

  std::string kind() const override { return "neural"; }
  const Catalog& catalog() const override { return catalog_; }
  std::size_t embed_dim() const override { return dim_; }
  double rho() const { return rho_; }
  bool trainable() const override { return true; }
  const ParamStore& params() const override { return params_; }
  ParamStore& mutable_params() override { return params_; }

  std::vector<double> encode(std::span<const ItemId> items) const override {
    check_items(items);
    std::vector<double> enc(dim_, 0.0);
    if (items.empty()) return enc;
    const auto& e = params_.at(kItemEmbeddings);
    const auto w = recency_weights(items.size());
    double total = 0.0;
    for (std::size_t j = 0; j < items.size(); ++j) {
      auto row = e.row(items[j]);
      for (std::size_t c = 0; c < dim_; ++c) enc[c] += w[j] * row[c];
      total += w[j];
    }
    for (auto& v : enc) v /= total;
    return enc;
  }

  std::vector<double> scores(std::span<const ItemId> items) const override {
    return scores_from_encoding(encode(items));
  }

  std::vector<double> scores_from_encoding(std::span<const double> enc) const {
    const auto& e = params_.at(kItemEmbeddings);
    const auto& b = params_.at(kItemBias);
    std::vector<double> s(catalog_.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = dot(enc, e.row(i)) + b.data[i];
    return s;
  }

  void encode_backward(std::span<const ItemId> items, std::span<const double> grad_enc,
                       ParamStore& grads) const override {
    if (items.empty()) return;
    const auto w = recency_weights(items.size());
    double total = 0.0;
    for (double x : w) total += x;
    auto& ge = grads.at(kItemEmbeddings);
    for (std::size_t j = 0; j < items.size(); ++j) {
      auto row = ge.row(items[j]);
      const double f = w[j] / total;
      for (std::size_t c = 0; c < dim_; ++c) row[c] += f * grad_enc[c];
    }
  }

  std::pair<double, ParamStore> rec_loss_and_grads(std::span<const TrainingExample> batch) const override {
    if (batch.empty()) throw std::invalid_argument("training batch must be non-empty");
    ParamStore grads = zeros_like(params_);
    const auto& e = params_.at(kItemEmbeddings);
    auto& ge = grads.at(kItemEmbeddings);
    auto& gb = grads.at(kItemBias);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> grad_enc(dim_);
    for (const auto& ex : batch) {
      if (!catalog_.contains(ex.target))
        throw std::invalid_argument("unknown target item " + std::to_string(ex.target));
      const auto enc = encode(ex.prefix);
      auto s = scores_from_encoding(enc);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double v : s) z += std::exp(v - mx);
      const double log_z = mx + std::log(z);
      loss += (log_z - s[ex.target]) * inv_n;
      std::fill(grad_enc.begin(), grad_enc.end(), 0.0);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double g = (std::exp(s[i] - log_z) - (i == ex.target ? 1.0 : 0.0)) * inv_n;
        gb.data[i] += g;
        auto erow = e.row(i);
        auto grow = ge.row(i);
        for (std::size_t c = 0; c < dim_; ++c) {
          grow[c] += g * enc[c];
          grad_enc[c] += g * erow[c];
        }
      }
      encode_backward(ex.prefix, grad_enc, grads);
    }
    return {loss, std::move(grads)};
  }

 private:
  std::vector<double> recency_weights(std::size_t n) const {
    std::vector<double> w(n);
    double v = 1.0;
    for (std::size_t j = n; j-- > 0;) {
      w[j] = v;
      v *= rho_;
    }
    return w;
  }

  Catalog catalog_;
  std::size_t dim_;
  double rho_;
  ParamStore params_;
};

struct RecTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

/// Mini-batch gradient descent on the cross-entropy loss; returns per-epoch
/// mean batch loss.
inline std::vector<double> train_recommender(Recommender& rec, std::span<const Session> sessions,
                                             const RecTrainConfig& cfg) {
  if (!rec.trainable()) throw UnsupportedOperation(rec.kind() + " recommender is not trainable");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  auto examples = make_examples(sessions);
  std::vector<double> curve;
  if (examples.empty()) return curve;
  Rng rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
      const auto end = std::min(examples.size(), start + cfg.batch_size);
      auto [loss, grads] =
          rec.rec_loss_and_grads(std::span<const TrainingExample>(examples).subspan(start, end - start));
      rec.apply_grads(grads, cfg.learning_rate);
      sum += loss;
      ++batches;
    }
    curve.push_back(sum / static_cast<double>(batches));
  }
  return curve;
}

}  // namespace cf2rec
