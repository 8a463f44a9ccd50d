#include <cmath>
#include <random>

#include "doctest.h"
#include "soflow/errors.hpp"
#include "soflow/gradtape.hpp"
#include "support/oracles.hpp"

using namespace soflow;

TEST_SUITE("tape") {

TEST_CASE("sum of squares has gradient 2x") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor(1, 3, {1.0, -2.0, 0.5}));
  tape.backward(ad::sum(ad::square(x)));
  const Tensor g = tape.grad(x);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == -4.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("stop_gradient blocks flow") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(3.0));
  // d/dx [x * sg(x)] = sg(x) = 3, not 2x = 6.
  const auto y = ad::mul(x, ad::stop_gradient(x));
  CHECK(y.item() == 9.0);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == 3.0);
}

TEST_CASE("stop_gradient of the only path leaves zeros") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor(2, 2, 1.0));
  const auto loss = ad::sum(ad::stop_gradient(ad::square(x)));
  CHECK_FALSE(loss.requires_grad());
  tape.backward(loss);
  CHECK(tape.grad(x) == Tensor(2, 2, 0.0));
}

TEST_CASE("unreached leaf gets zeros of its shape") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor(1, 2, 1.0));
  const auto unused = tape.parameter(Tensor(3, 1, 1.0));
  tape.backward(ad::sum(x));
  CHECK(tape.grad(unused) == Tensor(3, 1, 0.0));
}

TEST_CASE("constants do not require gradient") {
  ad::Tape tape;
  const auto c = tape.constant(Tensor(1, 2, 1.0));
  const auto p = tape.parameter(Tensor(1, 2, 1.0));
  CHECK_FALSE(c.requires_grad());
  CHECK_FALSE(ad::sin(c).requires_grad());
  CHECK(ad::add(c, p).requires_grad());
}

TEST_CASE("non-scalar loss is rejected") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("backward runs once and freezes the tape") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(1.0));
  const auto y = ad::square(x);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), DomainError);
  CHECK_THROWS_AS(ad::square(x), DomainError);
}

TEST_CASE("shape mismatches are reported") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor(2, 3));
  const auto b = tape.parameter(Tensor(2, 2));
  CHECK_THROWS_AS(ad::add(a, b), ShapeError);
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ad::slice(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(ad::broadcast(a, Shape{4, 3}), ShapeError);
}

TEST_CASE("values from different tapes cannot mix") {
  ad::Tape t1, t2;
  const auto a = t1.parameter(Tensor::scalar(1.0));
  const auto b = t2.parameter(Tensor::scalar(1.0));
  CHECK_THROWS_AS(ad::add(a, b), DomainError);
}

TEST_CASE("broadcast gradients are reduced back to the operand shape") {
  ad::Tape tape;
  const auto m = tape.parameter(Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  const auto row = tape.parameter(Tensor(1, 3, {1, 1, 1}));
  const auto col = tape.parameter(Tensor(2, 1, {2, 3}));
  const auto s = tape.parameter(Tensor::scalar(0.5));
  tape.backward(ad::sum(ad::mul(ad::add(ad::mul(m, col), row), s)));
  // d/d row_j = sum_i s = 1, d/d col_i = s * sum_j m_ij, d/ds = sum(m*col + row).
  CHECK(tape.grad(row) == Tensor(1, 3, {1.0, 1.0, 1.0}));
  CHECK(tape.grad(col) == Tensor(2, 1, {3.0, 7.5}));
  CHECK(tape.grad(s)[0] == doctest::Approx(2 * 6 + 3 * 15 + 6));
  CHECK(tape.grad(m) == Tensor(2, 3, {1, 1, 1, 1.5, 1.5, 1.5}));
}

TEST_CASE("fan-out accumulates") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(2.0));
  const auto y = ad::add(ad::mul(x, x), ad::scale(x, 3.0));
  tape.backward(y);
  CHECK(tape.grad(x)[0] == 7.0);
}

TEST_CASE("concat and slice round-trip gradients") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor(2, 1, {1, 2}));
  const auto b = tape.parameter(Tensor(2, 2, {3, 4, 5, 6}));
  const std::vector<ad::Value> parts{a, b};
  const auto c = ad::concat(parts);
  CHECK(c.data() == Tensor(2, 3, {1, 3, 4, 2, 5, 6}));
  const auto mid = ad::slice(c, 1, 1);
  CHECK(mid.data() == Tensor(2, 1, {3, 5}));
  tape.backward(ad::sum(ad::square(mid)));
  CHECK(tape.grad(a) == Tensor(2, 1, 0.0));
  CHECK(tape.grad(b) == Tensor(2, 2, {6, 0, 10, 0}));
}

TEST_CASE("row_mean averages columns") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor(2, 4, {1, 2, 3, 4, 0, 0, 0, 8}));
  const auto m = ad::row_mean(a);
  CHECK(m.data() == Tensor(2, 1, {2.5, 2.0}));
  tape.backward(ad::sum(m));
  CHECK(tape.grad(a) == Tensor(2, 4, 0.25));
}

TEST_CASE("relu subgradient is zero at and below zero") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor(1, 3, {-1.0, 0.0, 2.0}));
  tape.backward(ad::sum(ad::relu(x)));
  CHECK(tape.grad(x) == Tensor(1, 3, {0.0, 0.0, 1.0}));
}

TEST_CASE("random composites match central differences") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto cmp = oracle::compare_gradients(oracle::Composite{seed},
                                               oracle::Composite::inputs(seed), 1e-5, 1e-5);
    INFO("seed " << seed);
    CHECK(cmp.max_rel < 1e-5);
  }
}

TEST_CASE("matmul gradient matches central differences on larger shapes") {
  std::mt19937_64 rng(7);
  const std::vector<Tensor> in{oracle::random_tensor(5, 7, rng), oracle::random_tensor(7, 3, rng)};
  const auto fn = [](ad::Tape&, const std::vector<ad::Value>& v) {
    return ad::sum(ad::silu(ad::matmul(v[0], v[1])));
  };
  CHECK(oracle::compare_gradients(fn, in, 1e-5, 1e-5).max_rel < 1e-6);
}

TEST_CASE("elementwise derivatives match closed forms") {
  const double x0 = 0.37;
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(x0));
  const auto y = ad::add(ad::add(ad::sin(x), ad::cos(x)), ad::add(ad::exp(x), ad::silu(x)));
  tape.backward(y);
  const double sig = 1.0 / (1.0 + std::exp(-x0));
  const double expected = std::cos(x0) - std::sin(x0) + std::exp(x0) + sig * (1 + x0 * (1 - sig));
  CHECK(tape.grad(x)[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("square of three seeds gradient six") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(3.0));
  const auto y = ad::square(x);
  CHECK(y.item() == 9.0);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == 6.0);
}

TEST_CASE("matmul by the identity returns the operand") {
  ad::Tape tape;
  const auto a = tape.constant(Tensor(2, 2, {1, 2, 3, 4}));
  const auto eye = tape.constant(Tensor(2, 2, {1, 0, 0, 1}));
  CHECK(ad::matmul(a, eye).data() == a.data());
}

TEST_CASE("sum of squared W x matches central differences") {
  std::mt19937_64 rng(11);
  const std::vector<Tensor> in{oracle::random_tensor(4, 4, rng)};
  const Tensor x = oracle::random_tensor(4, 1, rng);
  const auto fn = [&x](ad::Tape& tape, const std::vector<ad::Value>& v) {
    return ad::sum(ad::square(ad::matmul(v[0], tape.constant(x))));
  };
  CHECK(oracle::compare_gradients(fn, in, 1e-5, 1e-5).max_rel < 1e-6);
}

TEST_CASE("detached self-difference has zero gradient") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor::scalar(1.7));
  tape.backward(ad::square(ad::sub(a, ad::stop_gradient(a))));
  CHECK(tape.grad(a)[0] == 0.0);
}

TEST_CASE("product with a detached factor") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor::scalar(2.0));
  const auto b = tape.parameter(Tensor::scalar(5.0));
  tape.backward(ad::mul(a, ad::stop_gradient(b)));
  CHECK(tape.grad(a)[0] == 5.0);
  CHECK(tape.grad(b)[0] == 0.0);
}

TEST_CASE("stop_gradient is a bitwise forward identity") {
  ad::Tape tape;
  const auto a = tape.parameter(Tensor(1, 3, {0.1, -1e-300, 3e200}));
  CHECK(ad::stop_gradient(a).data() == a.data());
}

TEST_CASE("x + x and mean") {
  ad::Tape tape;
  const auto x = tape.parameter(Tensor::scalar(1.0));
  const auto v = tape.parameter(Tensor(1, 4, 1.0));
  tape.backward(ad::add(ad::add(x, x), ad::mean(v)));
  CHECK(tape.grad(x)[0] == 2.0);
  CHECK(tape.grad(v) == Tensor(1, 4, 0.25));
}

TEST_CASE("leaf gradients keep the leaf shape") {
  ad::Tape tape;
  const auto w = tape.parameter(Tensor(3, 2, 0.5));
  const auto b = tape.parameter(Tensor(1, 2, 0.0));
  const auto x = tape.constant(Tensor(4, 3, 1.0));
  tape.backward(ad::mean(ad::add(ad::matmul(x, w), b)));
  CHECK(tape.grad(w).shape() == w.shape());
  CHECK(tape.grad(b).shape() == b.shape());
}

}  // TEST_SUITE
