#pragma once

// Minimal dense tensors and a named-parameter registry. Arithmetic is 64-bit;
// checkpoints narrow to float32 on disk.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cf2rec {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(element_count(shape), fill);
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  bool operator==(const Tensor&) const = default;
};

/// Ordered name -> tensor map. Used both for parameters and their gradients.
using ParamStore = std::map<std::string, Tensor>;

inline ParamStore zeros_like(const ParamStore& params) {
  ParamStore out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape));
  return out;
}

inline void check_same_layout(const ParamStore& params, const ParamStore& grads) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("gradient for unknown parameter '" + name + "'");
    if (it->second.shape != g.shape)
      throw std::invalid_argument("gradient shape mismatch for parameter '" + name + "'");
  }
}

/// Plain gradient descent: p -= lr * g for every gradient present.
inline void apply_grads(ParamStore& params, const ParamStore& grads, double learning_rate) {
  check_same_layout(params, grads);
  for (const auto& [name, g] : grads) {
    auto& p = params.at(name).data;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= learning_rate * g.data[i];
  }
}

/// acc += scale * g, accumulating into an existing layout.
inline void accumulate(ParamStore& acc, const ParamStore& grads, double scale = 1.0) {
  check_same_layout(acc, grads);
  for (const auto& [name, g] : grads) {
    auto& a = acc.at(name).data;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * g.data[i];
  }
}

inline double squared_norm(const ParamStore& params) {
  double s = 0.0;
  for (const auto& [name, t] : params) {
    for (double v : t.data) s += v * v;
  }
  return s;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace cf2rec
