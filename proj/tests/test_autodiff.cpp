#include <cmath>
#include <random>

#include "doctest.h"
#include "estgcn/autodiff.hpp"
#include "estgcn/errors.hpp"

using namespace estgcn;
using namespace estgcn::ad;

namespace {

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t({r, c});
  for (auto& x : t.storage()) x = d(rng);
  return t;
}

// Point is a flat vector; each function reshapes it as needed.
void check_grad(const ScalarFunction& f, const Tensor& point) {
  CHECK(grad_check(f, point, 1e-6) < 1e-6);
}

}  // namespace

TEST_CASE("tensor basics") {
  const auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), InputError);
  CHECK(t.all_finite());
}

TEST_CASE("sum of squares gradient") {
  Tape tape;
  Variable x = tape.variable(Tensor::vector({1.0, -2.0, 3.0}));
  Variable y = sum(mul(x, x));
  tape.backward(y);
  CHECK(y.value().item() == 14.0);
  CHECK(x.grad().storage() == std::vector<double>{2.0, -4.0, 6.0});
}

TEST_CASE("matmul gradient by hand") {
  Tape tape;
  Variable a = tape.variable(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Variable b = tape.variable(Tensor::matrix(2, 1, {5, 6}));
  tape.backward(sum(matmul(a, b)));
  // d/dA sum(A b) = 1 b^T; d/db = A^T 1.
  CHECK(a.grad().storage() == std::vector<double>{5, 6, 5, 6});
  CHECK(b.grad().storage() == std::vector<double>{4, 6});
}

TEST_CASE("finite differences for every op") {
  std::mt19937_64 rng(3);
  const Tensor p6 = random_matrix(rng, 1, 6);
  auto as23 = [](Variable v) { return reshape(v, {2, 3}); };

  const Tensor w34 = random_matrix(rng, 3, 4);
  check_grad([&](Tape& t, Variable x) { return sum(matmul(as23(x), t.constant(w34))); }, p6);
  check_grad([&](Tape&, Variable x) { return sum(mul(as23(x), sigmoid(as23(x)))); }, p6);
  check_grad([&](Tape&, Variable x) { return mean(tanh(scale(x, 1.7))); }, p6);
  check_grad([&](Tape& t, Variable x) {
    Variable pos = add(mul(x, x), t.constant(Tensor({1, 6}, 0.5)));
    return sum(log(pos));
  }, p6);
  check_grad([&](Tape& t, Variable x) {
    Variable row = t.constant(Tensor::vector({0.3, -0.2, 0.9}));
    return sum(mul(add(as23(x), row), as23(x)));
  }, p6);
  check_grad([&](Tape&, Variable x) { return sum(mul(sub(x, scale(x, 0.25)), x)); }, p6);
  check_grad([&](Tape&, Variable x) {
    Variable m = as23(x);
    return sum(mul(concat({m, tanh(m)}, 0), concat({tanh(m), m}, 0)));
  }, p6);
  check_grad([&](Tape&, Variable x) {
    Variable m = as23(x);
    return sum(mul(concat({m, sigmoid(m)}, 1), concat({sigmoid(m), m}, 1)));
  }, p6);
  check_grad([&](Tape&, Variable x) {
    Variable m = as23(x);
    return sum(mul(slice(m, 1, 1, 3), slice(m, 1, 0, 2)));
  }, p6);
  check_grad([&](Tape&, Variable x) {
    Variable m = as23(x);
    return sum(matmul(m, transpose(m)));
  }, p6);
  check_grad([&](Tape&, Variable x) {
    Variable g = gather(x, {0, 0, 5, 2}, {2, 2});
    return sum(mul(g, g));
  }, p6);
}

TEST_CASE("linearity of the gradient") {
  std::mt19937_64 rng(5);
  const Tensor w1 = random_matrix(rng, 3, 1), w2 = random_matrix(rng, 3, 1);
  const Tensor x0 = random_matrix(rng, 2, 3);
  auto grad_of = [&](double a, double b) {
    Tape tape;
    Variable x = tape.variable(x0);
    Variable f = sum(tanh(matmul(x, tape.constant(w1))));
    Variable g = sum(sigmoid(matmul(x, tape.constant(w2))));
    tape.backward(add(scale(f, a), scale(g, b)));
    return x.grad().storage();
  };
  const auto gf = grad_of(1.0, 0.0), gg = grad_of(0.0, 1.0), gc = grad_of(2.5, -0.7);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == doctest::Approx(2.5 * gf[i] - 0.7 * gg[i]).epsilon(1e-12));
}

TEST_CASE("backward accumulates and zero_grad resets") {
  Tape tape;
  Variable x = tape.variable(Tensor::vector({1.0, 2.0}));
  Variable y = sum(mul(x, x));
  tape.backward(y);
  tape.backward(y);
  CHECK(x.grad().storage() == std::vector<double>{4.0, 8.0});
  tape.zero_grad();
  tape.backward(y);
  CHECK(x.grad().storage() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("unreachable variables get zero gradient; constants get none") {
  Tape tape;
  Variable x = tape.variable(Tensor::vector({1.0, 2.0}));
  Variable unused = tape.variable(Tensor::vector({3.0}));
  Variable c = tape.constant(Tensor::vector({2.0, 2.0}));
  tape.backward(sum(mul(x, c)));
  CHECK(unused.grad().storage() == std::vector<double>{0.0});
  CHECK_FALSE(tape.requires_grad(c));
}

TEST_CASE("non-finite values and bad shapes are rejected") {
  Tape tape;
  Variable x = tape.variable(Tensor::vector({-1.0}));
  CHECK_THROWS_AS(log(x), NumericError);
  Variable a = tape.variable(Tensor({2, 3}, 1.0));
  CHECK_THROWS_AS(matmul(a, a), InputError);
  CHECK_THROWS_AS(tape.backward(a), InputError);  // root must be a scalar
  CHECK_THROWS_AS(grad_check([](Tape&, Variable v) { return sum(v); }, Tensor::vector({1.0}), 0.0), InputError);
}
