#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikedet/neuron.hpp"
#include "spikedet/rng.hpp"

using namespace spikedet;

namespace {

MembraneState scalar_state(double h) {
  MembraneState s = MembraneState::zeros(Shape{1, 1, 1, 1});
  s.h.data[0] = h;
  return s;
}

Tensor scalar(double x) {
  Tensor t(Shape{1, 1, 1, 1});
  t.data[0] = x;
  return t;
}

// Soft-reset IF micro-stepping: start at u + 0.5 with v_th = 1 and no input,
// count spikes over d_max micro-steps.
int soft_reset_if_count(double u, int d_max) {
  double mem = u + 0.5;
  int spikes = 0;
  for (int i = 0; i < d_max; ++i) {
    if (mem >= 1.0) {
      ++spikes;
      mem -= 1.0;
    }
  }
  return spikes;
}

}  // namespace

TEST_CASE("ilif_step worked examples") {
  ILIFParams p;  // tau=0.25, v_th=1, d_max=4
  SUBCASE("decay plus input") {
    auto [o, s] = ilif_step(scalar_state(2.0), scalar(1.0), p);
    CHECK(o.data[0] == 2);  // u = 1.5, rounds away from zero
    CHECK(s.h.data[0] == doctest::Approx(-0.5));
  }
  SUBCASE("clip at d_max") {
    auto [o, s] = ilif_step(scalar_state(0.0), scalar(5.7), p);
    CHECK(o.data[0] == 4);
    CHECK(s.h.data[0] == doctest::Approx(1.7));
  }
  SUBCASE("subthreshold") {
    auto [o, s] = ilif_step(scalar_state(0.0), scalar(-0.3), p);
    CHECK(o.data[0] == 0);
    CHECK(s.h.data[0] == doctest::Approx(-0.3));
  }
}

TEST_CASE("ilif_step errors") {
  ILIFParams p;
  Tensor x(Shape{2, 1, 1, 1});
  CHECK_THROWS_AS(ilif_step(scalar_state(0.0), x, p), ShapeError);
  Tensor bad = scalar(std::nan(""));
  CHECK_THROWS_AS(ilif_step(scalar_state(0.0), bad, p), NumericError);
  ILIFParams badp;
  badp.tau = 1.5;
  CHECK_THROWS_AS(ilif_step(scalar_state(0.0), scalar(1.0), badp), ConfigError);
}

TEST_CASE("soft-reset identity holds") {
  ILIFParams p;
  Rng rng = make_rng(5);
  for (int i = 0; i < 1000; ++i) {
    double h = rng.uniform(-3.0, 3.0);
    double x = rng.uniform(-6.0, 6.0);
    auto [o, s] = ilif_step(scalar_state(h), scalar(x), p);
    double u = p.tau * h + x;
    CHECK(s.h.data[0] + p.v_th * o.data[0] == doctest::Approx(u));
    CHECK(o.data[0] >= 0);
    CHECK(o.data[0] <= p.d_max);
  }
}

TEST_CASE("integer output equals soft-reset IF micro-step count") {
  ILIFParams p;
  Rng rng = make_rng(11);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform(-2.0, 6.0);
    auto [o, s] = ilif_step(scalar_state(0.0), scalar(u), p);
    CHECK(o.data[0] == soft_reset_if_count(u, p.d_max));
  }
}

TEST_CASE("ilif surrogate window is closed") {
  CHECK(ilif_surrogate(2.0, 4) == 1.0);
  CHECK(ilif_surrogate(-0.1, 4) == 0.0);
  CHECK(ilif_surrogate(0.0, 4) == 1.0);
  CHECK(ilif_surrogate(4.0, 4) == 1.0);
  CHECK(ilif_surrogate(4.1, 4) == 0.0);
}

TEST_CASE("lif_step worked examples") {
  LIFParams p;  // tau=0.25, v_th=1
  SUBCASE("fires above threshold") {
    auto [o, s] = lif_step(scalar_state(1.0), scalar(0.9), p);
    CHECK(o.data[0] == 1);  // u = 1.15
    CHECK(s.h.data[0] == doctest::Approx(0.15));
  }
  SUBCASE("stays silent below") {
    auto [o, s] = lif_step(scalar_state(0.8), scalar(0.1), p);
    CHECK(o.data[0] == 0);  // u = 0.3
  }
  SUBCASE("threshold equality fires") {
    auto [o, s] = lif_step(scalar_state(0.0), scalar(1.0), p);
    CHECK(o.data[0] == 1);
    CHECK(s.h.data[0] == doctest::Approx(0.0));
  }
}

TEST_CASE("lif surrogate window") {
  LIFParams p;  // a=1, v_th=1
  CHECK(lif_surrogate(1.2, p) == 1.0);
  CHECK(lif_surrogate(2.0, p) == 0.0);
  CHECK(lif_surrogate(1.5, p) == 1.0);  // |u - v_th| = a/2, closed
  CHECK(lif_surrogate(0.5, p) == 1.0);
  CHECK(lif_surrogate(0.49, p) == 0.0);
  LIFParams wide;
  wide.a = 2.0;
  CHECK(lif_surrogate(1.0, wide) == 0.5);
}

TEST_CASE("ilif_run resets membrane at sample boundaries") {
  ILIFParams p;
  // Two samples of T=2; the second sample must not see the first's state.
  Tensor x(Shape{4, 1, 1, 1});
  x.data = {0.6, 0.0, 0.6, 0.0};
  SpikeTensor s = ilif_run(x, p, 2);
  // t=0: u=0.6 -> spike 1, h=-0.4; t=1: u=-0.1 -> 0.
  CHECK(s.data[0] == 1);
  CHECK(s.data[1] == 0);
  CHECK(s.data[2] == 1);
  CHECK(s.data[3] == 0);
  CHECK_THROWS_AS(ilif_run(x, p, 3), ShapeError);
}

TEST_CASE("ilif_run matches chained ilif_step") {
  ILIFParams p;
  Rng rng = make_rng(23);
  const int T = 4;
  Tensor x(Shape{T, 2, 3, 3});
  for (double& v : x.data) v = rng.normal();
  SpikeTensor all = ilif_run(x, p, T);
  MembraneState st = MembraneState::zeros(Shape{1, 2, 3, 3});
  for (int t = 0; t < T; ++t) {
    Tensor slice(Shape{1, 2, 3, 3});
    std::copy_n(x.data.begin() + t * 18, 18, slice.data.begin());
    auto [o, next] = ilif_step(st, slice, p);
    st = std::move(next);
    for (int i = 0; i < 18; ++i) CHECK(all.data[static_cast<size_t>(t * 18 + i)] == o.data[static_cast<size_t>(i)]);
  }
}

TEST_CASE("unroll_to_binary patterns") {
  SpikeTensor s(Shape{1, 1, 1, 3}, 4);
  s.data = {3, 0, 4};
  SpikeTensor b = unroll_to_binary(s);
  CHECK(b.shape.n == 4);
  CHECK(b.d_max == 1);
  // m=3 -> 1,1,1,0 across the micro-step axis
  CHECK(b.at(0, 0, 0, 0) == 1);
  CHECK(b.at(1, 0, 0, 0) == 1);
  CHECK(b.at(2, 0, 0, 0) == 1);
  CHECK(b.at(3, 0, 0, 0) == 0);
  for (int t = 0; t < 4; ++t) CHECK(b.at(t, 0, 0, 1) == 0);
  for (int t = 0; t < 4; ++t) CHECK(b.at(t, 0, 0, 2) == 1);
}

TEST_CASE("unroll sums back to the original counts") {
  Rng rng = make_rng(3);
  SpikeTensor s(Shape{2, 3, 4, 4}, 4);
  for (auto& v : s.data) v = static_cast<std::int32_t>(rng.uniform(0.0, 5.0));
  SpikeTensor b = unroll_to_binary(s);
  const std::int64_t slice = s.shape.slice_numel();
  for (int n = 0; n < s.shape.n; ++n)
    for (std::int64_t i = 0; i < slice; ++i) {
      int sum = 0;
      for (int d = 0; d < s.d_max; ++d)
        sum += b.data[static_cast<size_t>((n * s.d_max + d) * slice + i)];
      CHECK(sum == s.data[static_cast<size_t>(n * slice + i)]);
    }
}

TEST_CASE("rate_decode") {
  SpikeTensor s(Shape{3, 1, 1, 1}, 4);
  s.data = {2, 0, 4};
  Tensor r = rate_decode(s);
  CHECK(r.shape == Shape{1, 1, 1, 1});
  CHECK(r.data[0] == doctest::Approx(2.0));

  SpikeTensor z(Shape{3, 1, 1, 1}, 4);
  CHECK(rate_decode(z).data[0] == 0.0);

  SpikeTensor one(Shape{1, 1, 1, 2}, 4);
  one.data = {3, 1};
  Tensor r1 = rate_decode(one, 1);
  CHECK(r1.data[0] == 3.0);
  CHECK(r1.data[1] == 1.0);
}
