#include <doctest.h>

#include "hiervid/adam.hpp"

using namespace hiervid;

TEST_CASE("adam first step matches the closed form") {
  ParamStore<double> params;
  auto theta = params.create("p", Shape{1});
  theta.grad()[0] = 2.0;
  Adam<double> opt(params, 0.001);
  opt.step(params);
  // lr * mhat / (sqrt(vhat) + eps) with mhat = 2, vhat = 4
  const double expected = -0.001 * 2.0 / (2.0 + 1e-8);
  CHECK(theta.data()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient with zero state leaves parameters bitwise unchanged") {
  ParamStore<float> params;
  auto theta = params.create("p", Shape{3});
  theta.data()[0] = 0.125f;
  theta.data()[1] = -7.5f;
  theta.data()[2] = 3.0f;
  theta.zero_grad();
  Adam<float> opt(params);
  for (int i = 0; i < 5; ++i) opt.step(params);
  CHECK(theta.data()[0] == 0.125f);
  CHECK(theta.data()[1] == -7.5f);
  CHECK(theta.data()[2] == 3.0f);
}

TEST_CASE("equal gradients produce identical updates") {
  ParamStore<double> params;
  auto a = params.create("a", Shape{1});
  auto b = params.create("b", Shape{1});
  a.data()[0] = 1.0;
  b.data()[0] = 1.0;
  Adam<double> opt(params, 0.01);
  for (int i = 0; i < 7; ++i) {
    a.zero_grad();
    b.zero_grad();
    a.grad()[0] = 0.3 * (i + 1);
    b.grad()[0] = 0.3 * (i + 1);
    opt.step(params);
  }
  CHECK(a.data()[0] == b.data()[0]);
}

TEST_CASE("moments persist across steps") {
  ParamStore<double> params;
  auto p = params.create("p", Shape{1});
  Adam<double> opt(params, 0.001);
  p.grad()[0] = 1.0;
  opt.step(params);
  const double m1 = opt.first_moments()[0][0];
  CHECK(m1 == doctest::Approx(0.1));
  p.zero_grad();
  opt.step(params);
  CHECK(opt.first_moments()[0][0] == doctest::Approx(0.9 * m1));
}
