#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "moevox/ops.hpp"
#include "moevox/rng.hpp"
#include "moevox/tensor.hpp"

using namespace moevox;
using moevox::testing::fd_check;

namespace {
constexpr real kFdTol = 1e-4;
constexpr real kTight = 1e-12;
}  // namespace

TEST_CASE("shape helpers") {
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK(shape_numel({1}) == 1);
  CHECK(same_shape({2, 3}, {2, 3}));
  CHECK_FALSE(same_shape({2, 3}, {3, 2}));
  CHECK(shape_str({2, 3}) == "[2, 3]");
}

TEST_CASE("broadcast_shape trailing-dim rule") {
  CHECK(broadcast_shape({3, 1, 5}, {4, 1}) == Shape{3, 4, 5});
  CHECK(broadcast_shape({1}, {7}) == Shape{7});
  CHECK(broadcast_shape({2, 3}, {2, 3}) == Shape{2, 3});
  CHECK_THROWS_WITH_AS(broadcast_shape({2, 3}, {4, 3}),
                       doctest::Contains("[2, 3]"), std::invalid_argument);
}

TEST_CASE("tensor factories and accessors") {
  Tensor z = Tensor::zeros({2, 2});
  CHECK(z.numel() == 4);
  for (real v : z.values()) CHECK(v == 0);
  Tensor f = Tensor::full({3}, 2.5);
  for (real v : f.values()) CHECK(v == 2.5);
  Tensor s = Tensor::scalar(7.0);
  CHECK(s.item() == 7.0);
  CHECK_THROWS_AS((void)f.item(), std::logic_error);
  Tensor d = Tensor::from_data({2}, {1.0, 2.0});
  CHECK(d.values()[1] == 2.0);
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0}), std::invalid_argument);
}

TEST_CASE("detach and clone") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor d = x.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.values()[0] == 1.0);
  d.mutable_values()[0] = 9.0;
  CHECK(x.values()[0] == 1.0);  // detach copies the buffer

  Tensor c = x.clone();
  c.mutable_values()[1] = -1.0;
  CHECK(x.values()[1] == 2.0);
}

TEST_CASE("tape: backward accumulates into leaves") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  Tape tape;
  Tensor y = sum(mul(x, x));  // sum of squares
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(kTight));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(kTight));
  CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(kTight));
}

TEST_CASE("tape: reuse of an input accumulates") {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tape tape;
  Tensor y = sum(add(x, x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(kTight));
}

TEST_CASE("tape: consumed tape refuses a second backward") {
  Tensor x = Tensor::from_data({1}, {1.0}, true);
  Tape tape;
  Tensor y = mul(x, x);
  backward(y);
  CHECK_THROWS_AS(backward(y), std::runtime_error);
}

TEST_CASE("tape: backward with no active tape throws") {
  Tensor x = Tensor::from_data({1}, {1.0}, true);
  CHECK_THROWS_AS(backward(x), std::runtime_error);
}

TEST_CASE("tape: non-scalar loss rejected") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("tape: nodes off the loss path are skipped") {
  Tensor x = Tensor::from_data({1}, {2.0}, true);
  Tensor w = Tensor::from_data({1}, {5.0}, true);
  Tape tape;
  Tensor unused = mul(w, w);  // recorded, but no adjoint ever reaches it
  Tensor y = mul(x, x);
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(kTight));
  CHECK_FALSE(w.grad_allocated());
  CHECK(unused.defined());
}

TEST_CASE("NoGradGuard suppresses recording") {
  Tensor x = Tensor::from_data({1}, {2.0}, true);
  Tape tape;
  {
    NoGradGuard ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(tape.size() == 0);
  Tensor y = mul(x, x);
  CHECK(tape.size() == 1);
  backward(y);
}

TEST_CASE("nested tapes record independently") {
  Tensor x = Tensor::from_data({1}, {2.0}, true);
  Tape outer;
  Tensor a = mul(x, x);
  {
    Tape inner;
    Tensor b = mul(x, x);
    backward(b);
    CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(kTight));
  }
  x.zero_grad();
  backward(a);  // outer tape still usable after inner consumed
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(kTight));
}

TEST_CASE("elementwise values") {
  Tensor a = Tensor::from_data({2, 2}, {1.0, -2.0, 3.0, 0.5});
  Tensor b = Tensor::from_data({2, 2}, {2.0, 4.0, -1.0, 0.25});
  CHECK(add(a, b).values()[1] == doctest::Approx(2.0));
  CHECK(sub(a, b).values()[2] == doctest::Approx(4.0));
  CHECK(mul(a, b).values()[0] == doctest::Approx(2.0));
  CHECK(div(a, b).values()[3] == doctest::Approx(2.0));
  CHECK(add_scalar(a, 1.5).values()[0] == doctest::Approx(2.5));
  CHECK(mul_scalar(a, -2.0).values()[1] == doctest::Approx(4.0));
  CHECK(neg(a).values()[2] == doctest::Approx(-3.0));
  CHECK(relu(a).values()[1] == 0.0);
  CHECK(relu(a).values()[2] == doctest::Approx(3.0));
  CHECK(leaky_relu(a, 0.2).values()[1] == doctest::Approx(-0.4));
  CHECK(clamp(a, -1.0, 1.0).values()[1] == -1.0);
  CHECK(clamp(a, -1.0, 1.0).values()[2] == 1.0);
}

TEST_CASE("broadcast binary values") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::from_data({3}, {10, 20, 30});
  Tensor col = Tensor::from_data({2, 1}, {100, 200});
  Tensor r = add(a, row);
  CHECK(r.shape() == Shape{2, 3});
  CHECK(r.values()[0] == 11);
  CHECK(r.values()[5] == 36);
  Tensor c = add(a, col);
  CHECK(c.values()[0] == 101);
  CHECK(c.values()[3] == 204);
  Tensor outer = mul(col, row);
  CHECK(outer.shape() == Shape{2, 3});
  CHECK(outer.values()[4] == 4000);
}

TEST_CASE("transcendental values against references") {
  Tensor x = Tensor::from_data({4}, {1.0, -1.0, 0.5, 2.3});
  Tensor g = gelu(x);
  CHECK(g.values()[0] == doctest::Approx(0.84134474606854293).epsilon(1e-14));
  CHECK(g.values()[1] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(g.values()[2] == doctest::Approx(0.3457312306370065).epsilon(1e-14));
  CHECK(g.values()[3] == doctest::Approx(2.2753345469501456).epsilon(1e-14));
  CHECK(gelu(Tensor::zeros({1})).values()[0] == 0.0);
  CHECK(sigmoid(Tensor::scalar(0.3)).item() ==
        doctest::Approx(0.57444251681165903).epsilon(1e-14));
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  CHECK(moevox::exp(Tensor::scalar(1.0)).item() ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(moevox::log(Tensor::scalar(std::exp(1.0))).item() ==
        doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("matmul value") {
  Tensor a = Tensor::from_data({2, 3}, {1.5, -2.0, 0.25, 0.0, 3.0, -1.0});
  Tensor b = Tensor::from_data({3, 2}, {2.0, 1.0, -0.5, 0.5, 4.0, -3.0});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.values()[0] == doctest::Approx(5.0).epsilon(kTight));
  CHECK(c.values()[1] == doctest::Approx(-0.25).epsilon(kTight));
  CHECK(c.values()[2] == doctest::Approx(-5.5).epsilon(kTight));
  CHECK(c.values()[3] == doctest::Approx(4.5).epsilon(kTight));
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("reductions and views") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(a).item() == 21.0);
  CHECK(mean(a).item() == doctest::Approx(3.5));
  Tensor r = reshape(a, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.values()[4] == 5);
  CHECK_THROWS_AS(reshape(a, {4, 2}), std::invalid_argument);

  Tensor s = slice(a, 1, 1, 2);
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s.values()[0] == 2);
  CHECK(s.values()[3] == 6);
  CHECK_THROWS_AS(slice(a, 1, 2, 2), std::invalid_argument);

  Tensor b = Tensor::from_data({2, 1}, {9, 10});
  Tensor cat = concat({a, b}, 1);
  CHECK(cat.shape() == Shape{2, 4});
  CHECK(cat.values()[3] == 9);
  CHECK(cat.values()[7] == 10);
  CHECK_THROWS_AS(concat({a, Tensor::from_data({3, 1}, {0, 0, 0})}, 1),
                  std::invalid_argument);
}

TEST_CASE("softmax_temperature values") {
  Tensor s = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  Tensor p1 = softmax_temperature(s, 1.0);
  real z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p1.values()[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  Tensor p2 = softmax_temperature(s, 0.5);
  CHECK(p2.values()[0] ==
        doctest::Approx(0.015876239976466765).epsilon(1e-14));
  CHECK(p2.values()[1] ==
        doctest::Approx(0.11731042782619838).epsilon(1e-14));
  CHECK(p2.values()[2] ==
        doctest::Approx(0.86681333219733492).epsilon(1e-14));
  real tot = 0;
  for (real v : p2.values()) tot += v;
  CHECK(tot == doctest::Approx(1.0).epsilon(1e-14));
  // large scores must not overflow thanks to max subtraction
  Tensor big = Tensor::from_data({2}, {1000.0, 1001.0});
  Tensor pb = softmax_temperature(big, 1.0);
  CHECK(std::isfinite(pb.values()[0]));
  CHECK(pb.values()[1] > pb.values()[0]);
  CHECK_THROWS_AS(softmax_temperature(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax_temperature(s, -1.0), std::invalid_argument);
}

TEST_CASE("spatial_mean") {
  // [1, 2, 2, 1, 1]: two channels of two voxels each
  Tensor a = Tensor::from_data({1, 2, 2, 1, 1}, {1.0, 3.0, 10.0, 20.0});
  Tensor m = spatial_mean(a);
  CHECK(m.shape() == Shape{1, 2});
  CHECK(m.values()[0] == doctest::Approx(2.0));
  CHECK(m.values()[1] == doctest::Approx(15.0));
}

TEST_CASE("gradients match central differences") {
  Rng rng(1234);
  Tensor x = Tensor::randn({2, 3}, rng, 1.0, true);
  Tensor y = Tensor::randn({2, 3}, rng, 1.0, true);
  Tensor row = Tensor::randn({3}, rng, 1.0, true);

  SUBCASE("add/sub with broadcast") {
    CHECK(fd_check([&] { return sum(add(x, row)); }, {x, row}) < kFdTol);
    CHECK(fd_check([&] { return sum(sub(x, row)); }, {x, row}) < kFdTol);
  }
  SUBCASE("mul/div with broadcast") {
    Tensor denom = Tensor::from_data({3}, {1.5, -2.0, 0.7}, true);
    CHECK(fd_check([&] { return sum(mul(x, row)); }, {x, row}) < kFdTol);
    CHECK(fd_check([&] { return sum(div(x, denom)); }, {x, denom}) < kFdTol);
  }
  SUBCASE("scalar ops") {
    CHECK(fd_check([&] { return sum(add_scalar(x, 3.0)); }, {x}) < kFdTol);
    CHECK(fd_check([&] { return sum(mul_scalar(x, -1.7)); }, {x}) < kFdTol);
    CHECK(fd_check([&] { return sum(neg(x)); }, {x}) < kFdTol);
  }
  SUBCASE("activations away from kinks") {
    Tensor a = Tensor::from_data({4}, {1.3, -0.8, 2.1, -2.5}, true);
    CHECK(fd_check([&] { return sum(relu(a)); }, {a}) < kFdTol);
    CHECK(fd_check([&] { return sum(leaky_relu(a, 0.2)); }, {a}) < kFdTol);
    CHECK(fd_check([&] { return sum(gelu(a)); }, {a}) < kFdTol);
    CHECK(fd_check([&] { return sum(sigmoid(a)); }, {a}) < kFdTol);
    CHECK(fd_check([&] { return sum(moevox::exp(a)); }, {a}) < kFdTol);
    CHECK(fd_check([&] { return sum(clamp(a, -2.0, 1.8)); }, {a}) < kFdTol);
    Tensor pos = Tensor::from_data({3}, {0.4, 1.9, 3.2}, true);
    CHECK(fd_check([&] { return sum(moevox::log(pos)); }, {pos}) < kFdTol);
  }
  SUBCASE("matmul") {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
    CHECK(fd_check([&] { return sum(matmul(a, b)); }, {a, b}, 1e-6) < 1e-6);
    // non-uniform downstream grad: square the product first
    CHECK(fd_check([&] { return sum(mul(matmul(a, b), matmul(a, b))); },
                   {a, b}) < kFdTol);
  }
  SUBCASE("reductions and views") {
    CHECK(fd_check([&] { return mean(mul(x, x)); }, {x}) < kFdTol);
    CHECK(fd_check([&] { return sum(mul(reshape(x, {3, 2}), reshape(x, {3, 2}))); },
                   {x}) < kFdTol);
    CHECK(fd_check([&] { return sum(mul(slice(x, 1, 1, 2), slice(y, 1, 0, 2))); },
                   {x, y}) < kFdTol);
    CHECK(fd_check([&] { return sum(mul(concat({x, y}, 0), concat({y, x}, 0))); },
                   {x, y}) < kFdTol);
  }
  SUBCASE("softmax_temperature") {
    Tensor s = Tensor::from_data({4}, {0.3, -1.2, 2.0, 0.9}, true);
    Tensor w = Tensor::from_data({4}, {1.0, -2.0, 0.5, 3.0});
    for (real tau : {0.5, 1.0, 1.5}) {
      CHECK(fd_check([&] { return sum(mul(softmax_temperature(s, tau), w)); },
                     {s}) < kFdTol);
    }
  }
  SUBCASE("spatial_mean") {
    Tensor a = Tensor::randn({2, 3, 2, 2, 2}, rng, 1.0, true);
    CHECK(fd_check([&] { return sum(mul(spatial_mean(a), spatial_mean(a))); },
                   {a}) < kFdTol);
  }
}

TEST_CASE("rng determinism and serialization") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  std::string st = a.state();
  std::vector<real> ahead;
  for (int i = 0; i < 10; ++i) ahead.push_back(a.normal());
  Rng c(0);
  c.set_state(st);
  for (int i = 0; i < 10; ++i) CHECK(c.normal() == ahead[i]);
}

TEST_CASE("rng normal moments") {
  Rng rng(7);
  const int n = 200000;
  real m = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    real x = rng.normal();
    m += x;
    m2 += x * x;
  }
  m /= n;
  m2 /= n;
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(m2 - 1.0) < 0.02);
}

TEST_CASE("rng fork decorrelates") {
  Rng a(9);
  Rng f = a.fork(1);
  Rng g = a.fork(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (f.next_u64() == g.next_u64()) same++;
  CHECK(same == 0);
}
