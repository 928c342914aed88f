#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "poembert/rng.hpp"
#include "poembert/tensor.hpp"

namespace poembert {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Scalar-valued computation recorded through the given tape.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Compares the analytic gradient of `f` against central differences
/// (f(x+h) - f(x-h)) / 2h. The relative error of one coordinate is
/// |a - n| / max(1e-8, |a| + |n|).
///
/// With `max_checks == 0` every coordinate of every parameter is checked;
/// otherwise that many (parameter, index) pairs are sampled with `seed`.
inline GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor> params,
                                  double h = 1e-5, std::size_t max_checks = 0,
                                  std::uint64_t seed = 0) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();
  if (max_checks == 0 || max_checks >= total) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].numel(); ++j) coords.emplace_back(i, j);
    }
  } else {
    Rng rng = make_rng(seed, Stream::GradCheck);
    std::vector<std::size_t> flat(total);
    for (std::size_t k = 0; k < total; ++k) flat[k] = k;
    shuffle(std::span(flat), rng);
    flat.resize(max_checks);
    std::sort(flat.begin(), flat.end());
    std::size_t base = 0, pi = 0;
    for (std::size_t k : flat) {
      while (k >= base + params[pi].numel()) base += params[pi++].numel();
      coords.emplace_back(pi, k - base);
    }
  }

  auto eval = [&] {
    Tape off(false);
    return f(off).item();
  };

  GradCheckResult res;
  for (const auto& [pi, j] : coords) {
    double& x = params[pi].data()[j];
    const double saved = x;
    x = saved + h;
    const double fp = eval();
    x = saved - h;
    const double fm = eval();
    x = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = std::as_const(params[pi]).grad()[j];
    const double rel =
        std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.checked;
  }
  return res;
}

}  // namespace poembert
