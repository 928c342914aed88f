#include <cmath>

#include <gtest/gtest.h>

#include "poembert/optim.hpp"

using namespace poembert;

namespace {

Tensor param(std::vector<double> values, std::vector<double> grad) {
  const std::size_t n = values.size();
  Tensor p({n}, std::move(values), true);
  std::copy(grad.begin(), grad.end(), p.grad().begin());
  return p;
}

}  // namespace

TEST(AdamW, ZeroGradientIsAFixedPoint) {
  std::vector<Tensor> ps = {param({1.0, -2.0}, {0.0, 0.0})};
  AdamWState s;
  for (int i = 0; i < 3; ++i) adamw_step(ps, s);
  EXPECT_EQ(ps[0].values(), (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(s.step, 3);
}

TEST(AdamW, FirstStepIsBiasCorrected) {
  std::vector<Tensor> ps = {param({1.0}, {0.1})};
  AdamWState s;
  s.lr = 5e-5;
  adamw_step(ps, s);
  // m_hat = 0.1, v_hat = 0.01 after correction.
  EXPECT_NEAR(ps[0][0], 1.0 - 5e-5 * 0.1 / (0.1 + 1e-8), 1e-15);
  EXPECT_NEAR(ps[0][0], 0.99995, 1e-10);
}

TEST(AdamW, DecoupledDecayOnly) {
  std::vector<Tensor> ps = {param({1.0}, {0.0})};
  AdamWState s;
  s.lr = 0.1;
  s.weight_decay = 0.01;
  adamw_step(ps, s);
  EXPECT_DOUBLE_EQ(ps[0][0], 0.999);
}

TEST(AdamW, MatchesHandRolledRecurrence) {
  std::vector<Tensor> ps = {param({0.5, -0.25}, {0, 0})};
  AdamWState s;
  s.lr = 0.01;
  s.weight_decay = 0.1;
  double w = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::cos(0.7 * t) * 0.3;
    ps[0].zero_grad();
    ps[0].grad()[0] = g;
    adamw_step(ps, s);
    w -= 0.01 * 0.1 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(ps[0][0], w, 1e-14) << "step " << t;
  }
}

TEST(AdamW, ShapeMismatch) {
  std::vector<Tensor> ps = {param({1.0}, {0.1})};
  AdamWState s;
  adamw_step(ps, s);
  std::vector<Tensor> more = {ps[0], param({1.0}, {0.1})};
  try {
    adamw_step(more, s);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
  std::vector<Tensor> wider = {param({1.0, 2.0}, {0.1, 0.1})};
  EXPECT_THROW(adamw_step(wider, s), Error);
}
