#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "apgf/adam.hpp"

namespace {

using apgf::Tensor;

TEST(Adam, ZeroGradientsFromFreshStateLeaveParamsUnchanged) {
  Tensor p({3}, std::vector<double>{0.5, -1.0, 2.0}, true);
  p.zero_grad();
  apgf::AdamState state;
  apgf::adam_step({&p}, state);
  EXPECT_EQ(p.values, (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(state.first_moment[0], (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, MomentsDecayUnderZeroGradients) {
  Tensor p({1}, std::vector<double>{1.0}, true);
  p.grad = {0.5};
  apgf::AdamState state;
  apgf::adam_step({&p}, state);
  const double m = state.first_moment[0][0];
  const double v = state.second_moment[0][0];
  p.grad = {0.0};
  apgf::adam_step({&p}, state);
  EXPECT_DOUBLE_EQ(state.first_moment[0][0], 0.9 * m);
  EXPECT_DOUBLE_EQ(state.second_moment[0][0], 0.999 * v);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // Hand computation: m_hat = g, v_hat = g^2, step = -lr * g / (|g| + eps).
  Tensor p({2}, std::vector<double>{0.0, 0.0}, true);
  p.grad = {0.5, -2.0};
  apgf::AdamState state;
  apgf::adam_step({&p}, state);
  EXPECT_NEAR(p.values[0], -0.0009999999800000003, 1e-18);
  EXPECT_NEAR(p.values[1], 0.000999999995, 1e-18);
}

TEST(Adam, PerParameterAdaptiveSteps) {
  Tensor small({1}, std::vector<double>{0.0}, true), large({1}, std::vector<double>{0.0}, true);
  apgf::AdamState state;
  small.grad = {1e-3};
  large.grad = {10.0};
  apgf::adam_step({&small, &large}, state);
  const double eff_small = -small.values[0] / 1e-3;
  const double eff_large = -large.values[0] / 10.0;
  EXPECT_GT(eff_small / eff_large, 1000.0);
}

TEST(Adam, SkipsFrozenParameters) {
  Tensor frozen({1}, std::vector<double>{1.0}, false);
  Tensor live({1}, std::vector<double>{1.0}, true);
  live.grad = {1.0};
  apgf::AdamState state;
  apgf::adam_step({&frozen, &live}, state);
  EXPECT_EQ(frozen.values[0], 1.0);
  EXPECT_LT(live.values[0], 1.0);
}

TEST(Adam, Errors) {
  Tensor p({2}, std::vector<double>{0.0, 0.0}, true);
  apgf::AdamState state;
  p.grad = {1.0};
  EXPECT_THROW(apgf::adam_step({&p}, state), apgf::ValidationError);
  p.grad = {1.0, NAN};
  apgf::AdamState fresh;
  EXPECT_THROW(apgf::adam_step({&p}, fresh), apgf::NumericError);
  apgf::AdamState bad;
  bad.config.learning_rate = 0.0;
  p.grad = {1.0, 1.0};
  EXPECT_THROW(apgf::adam_step({&p}, bad), apgf::ValidationError);
  Tensor q({1}, std::vector<double>{0.0}, true);
  q.grad = {0.0};
  apgf::AdamState used;
  apgf::adam_step({&q}, used);
  EXPECT_THROW(apgf::adam_step({&q, &p}, used), apgf::ValidationError);
}

}  // namespace
