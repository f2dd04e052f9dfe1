#include "punctc/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "punctc/random.hpp"
#include "testutil.hpp"

namespace punctc {
namespace {

using test::finite_difference;
using test::max_rel_error;
using test::random_array;

// Checks d(sum(R .* op(x, consts...)))/dx against central differences. The
// random projection R makes the scalar loss sensitive to every output entry.
void check_gradient(
    const std::function<Var(Tape&, Var)>& op, const Array& x0, Rng& rng,
    double tol = 1e-3) {
  Array projection;
  {
    Tape probe_tape;
    Var out = op(probe_tape, probe_tape.input(x0));
    projection = random_array(rng, out.value().shape(), 0.5, 1.5);
  }
  auto loss_value = [&](const Array& x) {
    Tape t;
    Var out = op(t, t.input(x));
    Var weighted = ag::mul(out, t.constant(projection));
    return ag::sum(weighted).value().at(0);
  };

  Tape t;
  Var in = t.input(x0);
  Var out = op(t, in);
  Var loss = ag::sum(ag::mul(out, t.constant(projection)));
  t.backward(loss);

  Array numeric = finite_difference(loss_value, x0);
  EXPECT_LT(max_rel_error(in.grad(), numeric), tol);
}

TEST(Autograd, MatmulIdentity) {
  Tape t;
  Array eye({2, 2}, {1, 0, 0, 1});
  Array a({2, 2}, {3, -1, 2, 5});
  Var out = ag::matmul(t.constant(eye), t.constant(a));
  for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out.value().at(i), a.at(i));
}

TEST(Autograd, MatmulScalarCase) {
  Tape t;
  Var a = t.input(Array({1, 1}, {2.0}));
  Var b = t.input(Array({1, 1}, {3.0}));
  Var out = ag::matmul(a, b);
  EXPECT_DOUBLE_EQ(out.value().at(0), 6.0);
  t.backward(out);
  EXPECT_DOUBLE_EQ(a.grad().at(0), 3.0);
  EXPECT_DOUBLE_EQ(b.grad().at(0), 2.0);
}

TEST(Autograd, MatmulShapeMismatchRejected) {
  Tape t;
  Var a = t.constant(Array({2, 3}));
  Var b = t.constant(Array({2, 2}));
  try {
    ag::matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("inner dimensions"), std::string::npos);
  }
}

TEST(Autograd, MatmulGradientBothSides) {
  Rng rng(7);
  Array a0 = random_array(rng, {3, 4});
  Array b0 = random_array(rng, {4, 2});
  // left operand
  check_gradient(
      [&](Tape& t, Var x) { return ag::matmul(x, t.constant(b0)); }, a0, rng);
  // right operand
  check_gradient(
      [&](Tape& t, Var x) { return ag::matmul(t.constant(a0), x); }, b0, rng);
}

TEST(Autograd, LogSoftmaxSymmetricRow) {
  Tape t;
  Var out = ag::log_softmax(t.constant(Array({1, 2}, {0.0, 0.0})));
  EXPECT_NEAR(out.value().at(0), -std::log(2.0), 1e-12);
  EXPECT_NEAR(out.value().at(1), -std::log(2.0), 1e-12);
}

TEST(Autograd, LogSoftmaxLargeMagnitudeStable) {
  Tape t;
  Var out = ag::log_softmax(t.constant(Array({1, 2}, {1000.0, 0.0})));
  EXPECT_NEAR(out.value().at(0), 0.0, 1e-12);
  EXPECT_NEAR(out.value().at(1), -1000.0, 1e-9);
  EXPECT_TRUE(out.value().all_finite());
}

TEST(Autograd, LogSoftmaxRowsNormalizeUpTo1e4) {
  Rng rng(21);
  for (int i = 0; i < 20; ++i) {
    Array x = random_array(rng, {4, 6}, -1e4, 1e4);
    Tape t;
    Var out = ag::log_softmax(t.constant(x));
    for (size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (size_t c = 0; c < 6; ++c) sum += std::exp(out.value().at(r, c));
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Autograd, LogSoftmaxRejectsNonFinite) {
  Tape t;
  Array bad({1, 2}, {std::numeric_limits<double>::quiet_NaN(), 0.0});
  EXPECT_THROW(ag::log_softmax(t.constant(bad)), Error);
}

TEST(Autograd, BackwardOfSumIsOnes) {
  Tape t;
  Var w = t.input(Array({3}, {1.0, -2.0, 0.5}));
  Var loss = ag::sum(w);
  t.backward(loss);
  for (size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.grad().at(i), 1.0);
}

TEST(Autograd, BackwardOfHalfSquaredNormIsIdentity) {
  Tape t;
  Array w0({4}, {1.0, -2.0, 0.5, 3.0});
  Var w = t.input(w0);
  Var loss = ag::scale(ag::sum(ag::mul(w, w)), 0.5);
  t.backward(loss);
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.grad().at(i), w0.at(i), 1e-12);
}

TEST(Autograd, CompositeAffineLogSoftmaxPickMatchesFiniteDifference) {
  Rng rng(13);
  Array w0 = random_array(rng, {3, 5});
  Array x0 = random_array(rng, {2, 3});
  Array b0 = random_array(rng, {5});

  auto build = [&](Tape& t, Var w) {
    Var h = ag::add_rowvec(ag::matmul(t.constant(x0), w), t.constant(b0));
    Var lp = ag::log_softmax(h);
    // pick entry (1, 2)
    return ag::slice_cols(ag::slice_rows(lp, 1, 1), 2, 1);
  };
  auto loss_value = [&](const Array& w) {
    Tape t;
    return ag::sum(build(t, t.input(w))).value().at(0);
  };

  Tape t;
  Var w = t.input(w0);
  t.backward(ag::sum(build(t, w)));
  Array numeric = finite_difference(loss_value, w0);
  EXPECT_LT(max_rel_error(w.grad(), numeric), 1e-3);
}

TEST(Autograd, SharedSubexpressionAccumulatesLikeDuplicatedGraph) {
  Rng rng(29);
  Array x0 = random_array(rng, {3, 3});

  // shared: g(x) used twice through one node
  Tape t1;
  Var x1 = t1.input(x0);
  Var g1 = ag::gelu(ag::matmul(x1, x1));
  t1.backward(ag::sum(ag::add(g1, g1)));

  // duplicated: the subgraph is built twice
  Tape t2;
  Var x2 = t2.input(x0);
  Var ga = ag::gelu(ag::matmul(x2, x2));
  Var gb = ag::gelu(ag::matmul(x2, x2));
  t2.backward(ag::sum(ag::add(ga, gb)));

  for (size_t i = 0; i < x0.numel(); ++i)
    EXPECT_NEAR(x1.grad().at(i), x2.grad().at(i), 1e-12);
}

TEST(Autograd, RepeatedBackwardRejected) {
  Tape t;
  Var w = t.input(Array({2}, {1.0, 2.0}));
  Var loss = ag::sum(w);
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), Error);
}

TEST(Autograd, NonScalarLossRejected) {
  Tape t;
  Var w = t.input(Array({2}, {1.0, 2.0}));
  EXPECT_THROW(t.backward(w), Error);
}

// Every differentiable op against the finite-difference oracle, >= 50 random
// instances across the op set.
TEST(Autograd, AllOpsMatchFiniteDifferences) {
  Rng rng(101);
  for (uint64_t seed = 0; seed < 4; ++seed) {
    Array m34 = random_array(rng, {3, 4});
    Array m43 = random_array(rng, {4, 3});
    Array m44 = random_array(rng, {4, 4});
    Array v4 = random_array(rng, {4});
    Array gain = random_array(rng, {4}, 0.5, 1.5);
    Array bias = random_array(rng, {4}, -0.5, 0.5);

    check_gradient([&](Tape& t, Var x) { return ag::matmul(x, t.constant(m43)); },
                   m34, rng);
    check_gradient(
        [&](Tape& t, Var x) { return ag::matmul_nt(x, t.constant(m34)); }, m34,
        rng);
    check_gradient([&](Tape& t, Var x) { return ag::add(x, t.constant(m44)); },
                   m44, rng);
    check_gradient(
        [&](Tape& t, Var x) { return ag::add_rowvec(x, t.constant(v4)); }, m34,
        rng);
    check_gradient(
        [&](Tape& t, Var x) { return ag::add_rowvec(t.constant(m34), x); }, v4,
        rng);
    check_gradient([&](Tape&, Var x) { return ag::scale(x, -1.7); }, m34, rng);
    check_gradient([&](Tape& t, Var x) { return ag::mul(x, t.constant(m44)); },
                   m44, rng);
    check_gradient([&](Tape&, Var x) { return ag::gelu(x); }, m34, rng);
    check_gradient(
        [&](Tape& t, Var x) {
          return ag::layer_norm(x, t.constant(gain), t.constant(bias));
        },
        m34, rng);
    check_gradient(
        [&](Tape& t, Var x) {
          return ag::layer_norm(t.constant(m34), x, t.constant(bias));
        },
        gain, rng);
    check_gradient(
        [&](Tape& t, Var x) {
          return ag::layer_norm(t.constant(m34), t.constant(gain), x);
        },
        bias, rng);
    check_gradient([&](Tape&, Var x) { return ag::softmax(x); }, m34, rng);
    check_gradient([&](Tape&, Var x) { return ag::log_softmax(x); }, m34, rng);
    check_gradient([&](Tape&, Var x) { return ag::logsumexp(x); }, m34, rng);
    check_gradient([&](Tape&, Var x) { return ag::slice_rows(x, 1, 2); }, m44,
                   rng);
    check_gradient([&](Tape&, Var x) { return ag::slice_cols(x, 1, 2); }, m44,
                   rng);
    check_gradient(
        [&](Tape& t, Var x) {
          return ag::concat_rows({x, t.constant(m34), x});
        },
        m34, rng);
    check_gradient(
        [&](Tape& t, Var x) {
          return ag::concat_cols({x, t.constant(m43), x});
        },
        m43, rng);
    check_gradient(
        [&](Tape&, Var x) { return ag::gather_rows(x, {2, 0, 2, 1}); }, m34,
        rng);
    check_gradient(
        [&](Tape&, Var x) { return ag::im2col(x, 3, 2, 1, 2); }, m34, rng);
    check_gradient([&](Tape&, Var x) { return ag::sum(x); }, m44, rng);
  }
}

}  // namespace
}  // namespace punctc
