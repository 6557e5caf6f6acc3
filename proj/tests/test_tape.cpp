#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "apgf/random.hpp"
#include "apgf/tape.hpp"
#include "support/finite_difference.hpp"

namespace {

using apgf::Shape;
using apgf::Tape;
using apgf::Tensor;
using apgf::Var;

Tensor random_tensor(Shape shape, apgf::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), 0.0, true);
  for (double& v : t.values) v = lo + (hi - lo) * rng.uniform();
  return t;
}

TEST(Tape, MaskedSoftmaxSingleCandidate) {
  Tape tape;
  Var p = apgf::masked_softmax(tape.constant({1, 1}, {3.7}), {1});
  EXPECT_EQ(p.values()[0], 1.0);
}

TEST(Tape, MaskedSoftmaxUniform) {
  Tape tape;
  Var p = apgf::masked_softmax(tape.constant({1, 3}, {1, 1, 1}), {1, 1, 1});
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Tape, AnalyticActivations) {
  Tape tape;
  EXPECT_EQ(apgf::tanh(tape.scalar(0.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(apgf::leaky_relu(tape.scalar(-1.0), 0.2).item(), -0.2);
  EXPECT_EQ(apgf::leaky_relu(tape.scalar(2.5), 0.2).item(), 2.5);
}

TEST(Tape, MaskedSoftmaxIsProbabilityVector) {
  apgf::Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(9);
    std::vector<double> x(rows * cols);
    std::vector<unsigned char> mask(rows * cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = 40.0 * (rng.uniform() - 0.5);
      mask[i] = rng.uniform() < 0.6;
    }
    for (std::size_t r = 0; r < rows; ++r) mask[r * cols + rng.below(cols)] = 1;
    Tape tape;
    Var p = apgf::masked_softmax(tape.constant({rows, cols}, x), mask);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = p.values()[r * cols + c];
        ASSERT_GE(v, 0.0);
        if (!mask[r * cols + c]) {
          ASSERT_EQ(v, 0.0);
        }
        total += v;
      }
      ASSERT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Tape, SumGradientIsOnes) {
  Tensor w({3}, std::vector<double>{0.3, -1.0, 2.0}, true);
  Tape tape;
  tape.backward(apgf::sum(tape.leaf(w)));
  EXPECT_EQ(*tape.gradient(w), (std::vector<double>{1, 1, 1}));
}

TEST(Tape, SquareGradient) {
  Tensor w({1}, std::vector<double>{2.0}, true);
  Tape tape;
  Var x = tape.leaf(w);
  tape.backward(apgf::sum(apgf::mul(x, x)));
  EXPECT_EQ((*tape.gradient(w))[0], 4.0);
}

TEST(Tape, ReusedLeafAccumulates) {
  Tensor w({1}, std::vector<double>{3.0}, true);
  Tape tape;
  Var loss = apgf::add(apgf::mul(tape.leaf(w), tape.leaf(w)), tape.leaf(w));
  tape.backward(loss);
  EXPECT_EQ((*tape.gradient(w))[0], 7.0);
}

TEST(Tape, Errors) {
  Tape tape;
  EXPECT_THROW(apgf::add(tape.constant({2, 2}, {1, 2, 3, 4}), tape.constant({3}, {1, 2, 3})),
               apgf::ValidationError);
  EXPECT_THROW(apgf::matmul(tape.constant({2, 3}, std::vector<double>(6, 1.0)),
                            tape.constant({2, 3}, std::vector<double>(6, 1.0))),
               apgf::ValidationError);
  EXPECT_THROW(apgf::masked_softmax(tape.constant({1, 2}, {1, 2}), {0, 0}), apgf::ValidationError);
  EXPECT_THROW(apgf::log(tape.scalar(0.0)), apgf::NumericError);
  EXPECT_THROW(tape.backward(tape.constant({2}, {1, 2})), apgf::ValidationError);

  Tensor w({1}, std::vector<double>{1.0}, true);
  Tape once;
  Var loss = apgf::sum(once.leaf(w));
  once.backward(loss);
  EXPECT_THROW(once.backward(loss), apgf::ValidationError);
  EXPECT_THROW(once.scalar(1.0), apgf::ValidationError);
}

TEST(Tape, ConstantsCarryNoGradient) {
  Tensor w({2}, std::vector<double>{1.0, 2.0}, false);
  Tape tape;
  Var loss = apgf::sum(tape.leaf(w));
  tape.backward(loss);
  EXPECT_EQ(tape.gradient(w), nullptr);
}

// Each primitive is checked against central differences through a random
// linear functional of its output.
struct OpCase {
  const char* name;
  std::vector<Shape> inputs;
  std::function<Var(Tape&, const std::vector<Var>&)> build;
};

TEST(Tape, GradientCheckEveryPrimitive) {
  const std::vector<unsigned char> mask = {1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0};
  const std::vector<OpCase> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, const std::vector<Var>& x) { return apgf::matmul(x[0], x[1]); }},
      {"transpose", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::transpose(x[0]); }},
      {"add", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::add(x[0], x[1]); }},
      {"add_broadcast", {{3, 4}, {1, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::add(x[0], x[1]); }},
      {"outer_add", {{3, 1}, {4, 1}}, [](Tape&, const std::vector<Var>& x) { return apgf::outer_add(x[0], x[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::mul(x[0], x[1]); }},
      {"mul_scalar", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::mul_scalar(x[0], -1.7); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](Tape&, const std::vector<Var>& x) { return apgf::concat({x[0], x[1]}, 1); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [](Tape&, const std::vector<Var>& x) { return apgf::concat({x[0], x[1]}, 0); }},
      {"leaky_relu", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::leaky_relu(x[0], 0.2); }},
      {"tanh", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::tanh(x[0]); }},
      {"masked_softmax", {{3, 4}}, [&mask](Tape&, const std::vector<Var>& x) { return apgf::masked_softmax(x[0], mask); }},
      {"log", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::log(x[0]); }},
      {"sum", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::sum(x[0]); }},
      {"mean", {{3, 4}}, [](Tape&, const std::vector<Var>& x) { return apgf::mean(x[0]); }},
      {"slice_rows", {{4, 3}}, [](Tape&, const std::vector<Var>& x) { return apgf::slice_rows(x[0], 1, 3); }},
      {"gather_rows", {{4, 3}}, [](Tape&, const std::vector<Var>& x) { return apgf::gather_rows(x[0], {2, 0, 2}); }},
      {"pick", {{4, 3}}, [](Tape&, const std::vector<Var>& x) { return apgf::pick(x[0], 7); }},
  };
  apgf::Rng rng(77);
  for (const auto& op : cases) {
    SCOPED_TRACE(op.name);
    std::vector<Tensor> inputs;
    for (const auto& shape : op.inputs) {
      // log needs positive inputs; keep leaky_relu inputs away from its kink.
      Tensor t = std::string(op.name) == "log" ? random_tensor(shape, rng, 0.2, 2.0)
                                              : random_tensor(shape, rng);
      if (std::string(op.name) == "leaky_relu")
        for (double& v : t.values) v += v > 0 ? 0.1 : -0.1;
      inputs.push_back(std::move(t));
    }
    std::vector<double> weights;
    auto forward = [&](Tape& tape, Var* out) {
      std::vector<Var> vars;
      for (const auto& t : inputs) vars.push_back(tape.leaf(t));
      Var y = op.build(tape, vars);
      if (weights.empty()) {
        apgf::Rng wrng(3);
        for (std::size_t i = 0; i < y.values().size(); ++i) weights.push_back(wrng.uniform() - 0.5);
      }
      Var loss = apgf::sum(apgf::mul(y, tape.constant(y.shape(), weights)));
      if (out) *out = loss;
      return loss.item();
    };
    Tape tape;
    Var loss;
    forward(tape, &loss);
    tape.backward(loss);
    for (auto& t : inputs) {
      const std::vector<double> analytic = *tape.gradient(t);
      const auto numeric = apgf::testing::central_difference(t.values, [&] {
        Tape probe;
        return forward(probe, nullptr);
      });
      for (std::size_t i = 0; i < analytic.size(); ++i)
        EXPECT_LE(apgf::testing::relative_error(analytic[i], numeric[i], 1e-3), 1e-6)
            << "entry " << i << " analytic " << analytic[i] << " numeric " << numeric[i];
    }
  }
}

TEST(Tape, DeterministicOutputs) {
  apgf::Rng rng(1);
  Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  auto run = [&] {
    Tape tape;
    Var y = apgf::masked_softmax(apgf::tanh(apgf::matmul(tape.leaf(a), tape.leaf(b))),
                                 std::vector<unsigned char>(15, 1));
    return y.values();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
