#pragma once

// Adam with bias correction, and global-norm gradient clipping.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "vgnsl/model.hpp"

namespace vgnsl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; step_count is the 1-based step index.
// Entries with skip(i) == true are left untouched (parameters and moments).
template <class T, class Skip>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 double lr, const AdamConfig& cfg, std::uint64_t step_count, Skip&& skip) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  if (step_count < 1) throw ConfigError("adam: step count starts at 1");
  if (!all_finite(grad)) throw DegenerateInput("adam: non-finite gradient");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    if (skip(i)) continue;
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double mhat = static_cast<double>(m[i]) / c1;
    const double vhat = static_cast<double>(v[i]) / c2;
    param[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

template <class T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 double lr, const AdamConfig& cfg, std::uint64_t step_count) {
  adam_update(param, grad, m, v, lr, cfg, step_count, [](std::size_t) { return false; });
}

// First and second moments for every parameter tensor plus a step counter.
template <class T>
struct AdamState {
  ParamTensors<T> m;
  ParamTensors<T> v;
  std::uint64_t steps = 0;

  static AdamState zeros(const ModelDims& dims) {
    return AdamState{ParamTensors<T>::zeros(dims), ParamTensors<T>::zeros(dims), 0};
  }
  void reset() {
    m.for_each([](auto, Tensor<T>& t) { t.zero(); });
    v.for_each([](auto, Tensor<T>& t) { t.zero(); });
    steps = 0;
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Applies one Adam step to every tensor that has a (non-empty) gradient.
template <class T>
void optimizer_step(ModelParams<T>& params, const GradientSet<T>& grads, AdamState<T>& state,
                    double lr, const AdamConfig& cfg) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  ++state.steps;
  const std::size_t frozen = params.frozen_columns;
  auto apply = [&](Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v, bool is_embedding) {
    if (g.empty()) return;
    if (g.shape != p.shape) throw ShapeError("gradient shape does not match parameter");
    if (is_embedding && frozen > 0) {
      const std::size_t cols = p.cols();
      adam_update<T>(p.data, g.data, m.data, v.data, lr, cfg, state.steps, [&](std::size_t i) {
        return params.is_frozen(i / cols, i % cols);
      });
    } else {
      adam_update<T>(p.data, g.data, m.data, v.data, lr, cfg, state.steps);
    }
  };
  apply(params.embedding, grads.embedding, state.m.embedding, state.v.embedding, true);
  apply(params.w1, grads.w1, state.m.w1, state.v.w1, false);
  apply(params.b1, grads.b1, state.m.b1, state.v.b1, false);
  apply(params.w2, grads.w2, state.m.w2, state.v.w2, false);
  apply(params.b2, grads.b2, state.m.b2, state.v.b2, false);
  apply(params.phi, grads.phi, state.m.phi, state.v.phi, false);
}

// Global L2 norm over every present gradient tensor.
template <class T>
double grad_norm(const GradientSet<T>& g) {
  double s = 0;
  g.for_each([&](auto, const Tensor<T>& t) {
    for (T x : t.data) s += static_cast<double>(x) * static_cast<double>(x);
  });
  return std::sqrt(s);
}

// Rescales g so its global norm is at most max_norm; returns the pre-clip norm.
template <class T>
double clip_grad_norm(GradientSet<T>& g, double max_norm) {
  const double n = grad_norm(g);
  if (max_norm > 0 && n > max_norm) {
    const T scale = static_cast<T>(max_norm / n);
    g.for_each([&](auto, Tensor<T>& t) {
      for (T& x : t.data) x *= scale;
    });
  }
  return n;
}

}  // namespace vgnsl
