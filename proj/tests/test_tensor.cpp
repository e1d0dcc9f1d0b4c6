#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikedet/rng.hpp"
#include "spikedet/tensor.hpp"

using namespace spikedet;

TEST_CASE("shape arithmetic") {
  Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.slice_numel() == 60);
  CHECK(s == Shape{2, 3, 4, 5});
  CHECK(s != Shape{2, 3, 4, 6});
}

TEST_CASE("tensor indexing is row-major") {
  Tensor t(Shape{2, 2, 2, 2});
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data[static_cast<size_t>(i)] = static_cast<double>(i);
  CHECK(t.at(0, 0, 0, 0) == 0.0);
  CHECK(t.at(0, 0, 0, 1) == 1.0);
  CHECK(t.at(0, 0, 1, 0) == 2.0);
  CHECK(t.at(0, 1, 0, 0) == 4.0);
  CHECK(t.at(1, 0, 0, 0) == 8.0);
  CHECK(t.at(1, 1, 1, 1) == 15.0);
}

TEST_CASE("full and zeros constructors") {
  Tensor z = Tensor::zeros(Shape{1, 2, 2, 2});
  for (double v : z.data) CHECK(v == 0.0);
  Tensor f = Tensor::full(Shape{1, 2, 2, 2}, 3.5);
  for (double v : f.data) CHECK(v == 3.5);
}

TEST_CASE("require_finite flags NaN and infinity") {
  Tensor t(Shape{1, 1, 1, 2});
  t.data[0] = 1.0;
  CHECK_NOTHROW(t.require_finite("ok"));
  t.data[1] = std::nan("");
  CHECK_THROWS_AS(t.require_finite("bad"), NumericError);
  t.data[1] = 1.0 / 0.0;
  CHECK_THROWS_AS(t.require_finite("bad"), NumericError);
}

TEST_CASE("spike tensor validation enforces [0, d_max]") {
  SpikeTensor s(Shape{1, 1, 2, 2}, 4);
  s.data = {0, 4, 2, 1};
  CHECK_NOTHROW(s.validate());
  s.data[2] = 5;
  CHECK_THROWS_AS(s.validate(), ShapeError);
  s.data[2] = -1;
  CHECK_THROWS_AS(s.validate(), ShapeError);
}

TEST_CASE("spike tensor to_real and spike_sum") {
  SpikeTensor s(Shape{1, 1, 1, 3}, 4);
  s.data = {1, 0, 4};
  CHECK(s.spike_sum() == 5);
  Tensor r = s.to_real();
  CHECK(r.data[0] == 1.0);
  CHECK(r.data[1] == 0.0);
  CHECK(r.data[2] == 4.0);
}

TEST_CASE("mean and population variance") {
  Tensor t(Shape{1, 1, 1, 4});
  t.data = {1.0, 2.0, 3.0, 4.0};
  CHECK(tensor_mean(t) == doctest::Approx(2.5));
  CHECK(tensor_variance(t) == doctest::Approx(1.25));
}

TEST_CASE("max_abs and max_abs_diff") {
  Tensor a(Shape{1, 1, 1, 3});
  a.data = {-3.0, 1.0, 2.0};
  CHECK(max_abs(a) == 3.0);
  Tensor b = a;
  b.data[1] = 1.5;
  CHECK(max_abs_diff(a, b) == doctest::Approx(0.5));
  Tensor c(Shape{1, 1, 1, 2});
  CHECK_THROWS_AS(max_abs_diff(a, c), ShapeError);
}

TEST_CASE("rng is deterministic and fork streams are independent") {
  Rng a = make_rng(42);
  Rng b = make_rng(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c = make_rng(42);
  Rng f1 = c.fork(1);
  Rng f2 = c.fork(2);
  CHECK(f1.uniform() != f2.uniform());
}

TEST_CASE("rng normal moments") {
  Rng r = make_rng(7);
  const int n = 200000;
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = r.normal();
    m += v;
    m2 += v * v;
  }
  m /= n;
  m2 /= n;
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(m2 - 1.0) < 0.02);
}
