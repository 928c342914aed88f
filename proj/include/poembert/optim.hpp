#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "poembert/error.hpp"
#include "poembert/tensor.hpp"

namespace poembert {

/// AdamW moments and hyperparameters. `m[i]`/`v[i]` belong to the i-th
/// parameter passed to `adamw_step`; they are sized on the first step.
struct AdamWState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamWState&) const = default;
};

/// One AdamW update of every parameter from its accumulated gradient.
/// Weight decay is decoupled: p -= lr*wd*p happens before the Adam step.
inline void adamw_step(std::span<Tensor> params, AdamWState& state) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer holds " + std::to_string(state.m.size()) +
                                         " moment slots for " +
                                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
      throw Error(Errc::ShapeMismatch, "optimizer moment size for parameter " +
                                           std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = std::as_const(params[i]).grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (state.weight_decay != 0.0) p[j] -= state.lr * state.weight_decay * p[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace poembert
