#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikedet/metrics.hpp"
#include "spikedet/rng.hpp"

#include <cmath>

using namespace spikedet;

namespace {

// Naive O(B*C*H*W*S^2) reference for the local saturation index.
double lfsi_reference(const SpikeTensor& o, int time_steps, int s) {
  Tensor mask = saturation_mask(o, time_steps);
  const int r = s / 2;
  double acc = 0.0;
  std::int64_t positions = 0;
  for (int n = 0; n < mask.shape.n; ++n)
    for (int c = 0; c < mask.shape.c; ++c)
      for (int y = 0; y < mask.shape.h; ++y)
        for (int x = 0; x < mask.shape.w; ++x) {
          int count = 0, area = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= mask.shape.h || xx < 0 || xx >= mask.shape.w) continue;
              ++area;
              if (mask.at(n, c, yy, xx) > 0.5) ++count;
            }
          acc += static_cast<double>(count) / area;
          ++positions;
        }
  return acc / static_cast<double>(positions);
}

SpikeTensor random_spikes(Shape s, int d_max, Rng& rng) {
  SpikeTensor t(s, d_max);
  for (auto& v : t.data)
    v = static_cast<std::int32_t>(rng.uniform(0.0, d_max + 1.0));
  return t;
}

}  // namespace

TEST_CASE("saturation mask sums spikes over the sample's time axis") {
  SpikeTensor o(Shape{4, 1, 1, 1}, 2);  // two samples, T=2, d_max=2
  o.data = {2, 2, 2, 1};
  Tensor m = saturation_mask(o, 2);
  CHECK(m.shape == Shape{2, 1, 1, 1});
  CHECK(m.data[0] == 1.0);  // 2+2 == T*d_max
  CHECK(m.data[1] == 0.0);
  CHECK_THROWS_AS(saturation_mask(o, 3), ShapeError);
}

TEST_CASE("lfsi special cases") {
  LFSIConfig cfg;
  SUBCASE("all saturated gives one, none gives zero") {
    SpikeTensor full(Shape{1, 2, 4, 4}, 4);
    for (auto& v : full.data) v = 4;
    CHECK(lfsi_layer(full, 1, cfg) == doctest::Approx(1.0));
    SpikeTensor none(Shape{1, 2, 4, 4}, 4);
    CHECK(lfsi_layer(none, 1, cfg) == doctest::Approx(0.0));
  }
  SUBCASE("single saturated neuron in a 5x5 map") {
    SpikeTensor o(Shape{1, 1, 5, 5}, 4);
    o.at(0, 0, 2, 2) = 4;
    CHECK(lfsi_layer(o, 1, cfg) == doctest::Approx(0.04));
  }
  SUBCASE("window of one reduces to the global saturated fraction") {
    Rng rng = make_rng(1);
    SpikeTensor o = random_spikes(Shape{2, 3, 6, 6}, 2, rng);
    LFSIConfig c1;
    c1.s = 1;
    int sat = 0;
    for (auto v : o.data) sat += (v == 2);
    CHECK(lfsi_layer(o, 1, c1) ==
          doctest::Approx(static_cast<double>(sat) / static_cast<double>(o.shape.numel())));
  }
  SUBCASE("odd window required") {
    LFSIConfig bad;
    bad.s = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("lfsi matches the brute-force reference") {
  Rng rng = make_rng(2);
  LFSIConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    int h = 3 + static_cast<int>(rng.uniform(0.0, 8.0));
    int w = 3 + static_cast<int>(rng.uniform(0.0, 8.0));
    int t_steps = (trial % 2) ? 2 : 1;
    SpikeTensor o = random_spikes(Shape{2 * t_steps, 2, h, w}, 2, rng);
    double fast = lfsi_layer(o, t_steps, cfg);
    double slow = lfsi_reference(o, t_steps, cfg.s);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("larger windows dilute a compact border cluster") {
  // A tight saturated cluster in the corner: growing S can only spread the
  // same saturation mass over larger windows.
  SpikeTensor o(Shape{1, 1, 12, 12}, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) o.at(0, 0, y, x) = 4;
  double prev = 1.0;
  for (int s : {1, 3, 5, 7, 9}) {
    LFSIConfig cfg;
    cfg.s = s;
    double v = lfsi_layer(o, 1, cfg);
    CHECK(v > 0.0);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("network lfsi averages the layers") {
  CHECK(lfsi_network({0.2, 0.4}) == doctest::Approx(0.3));
  CHECK_THROWS_AS(lfsi_network(std::vector<double>{}), ConfigError);
}

TEST_CASE("firing rate on the unrolled basis") {
  SpikeTensor a(Shape{1, 1, 2, 2}, 4);
  a.data = {2, 0, 0, 0};
  CHECK(firing_rate({&a}) == doctest::Approx(0.125));
  SpikeTensor b(Shape{1, 1, 2, 2}, 4);
  b.data = {4, 4, 4, 4};
  CHECK(firing_rate({&b}) == doctest::Approx(1.0));
  CHECK(firing_rate({&a, &b}) == doctest::Approx((2.0 + 16.0) / 32.0));
  CHECK_THROWS_AS(firing_rate({}), ConfigError);
}

TEST_CASE("accumulate-operation counting") {
  TraceRecorder trace;
  trace.batch = 1;
  ConvCost c;
  c.name = "conv";
  c.cin_per_group = 2;
  c.cout = 4;
  c.k = 3;
  c.hout = 8;
  c.wout = 8;
  c.encoding = false;
  c.presyn_fr = 0.5;
  c.n_slices = 1;
  trace.convs.push_back(c);
  CHECK(count_sops(trace, 1) == doctest::Approx(2304.0));
  // Four micro-steps and two time slices scale linearly.
  trace.convs[0].n_slices = 2;
  CHECK(count_sops(trace, 4) == doctest::Approx(2304.0 * 8));
  // Encoding convs do not contribute accumulate counts.
  trace.convs[0].encoding = true;
  CHECK(count_sops(trace, 4) == 0.0);
}

TEST_CASE("multiply-add counting for the encoding layer") {
  TraceRecorder trace;
  trace.batch = 1;
  ConvCost c;
  c.name = "encoding";
  c.cin_per_group = 3;
  c.cout = 4;
  c.k = 3;
  c.hout = 4;
  c.wout = 4;
  c.encoding = true;
  c.n_slices = 2;
  trace.convs.push_back(c);
  CHECK(count_flops(trace) == doctest::Approx(2.0 * 3 * 4 * 9 * 16 * 2));
  trace.convs[0].encoding = false;
  CHECK(count_flops(trace) == 0.0);
}

TEST_CASE("energy model constants") {
  CHECK(energy_mj(1e9, 0.0) == doctest::Approx(0.9));
  CHECK(energy_mj(0.0, 2e9) == doctest::Approx(4.6));
  CHECK(energy_mj(1e9, 2e9) == doctest::Approx(5.5));
  CHECK(energy_mj(0.0, 0.0) == 0.0);
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {-1, -2, -3}) == doctest::Approx(-1.0));
  std::vector<double> xs{1, 2, 3}, ys{1, 2, 4};
  double expect = 3.0 / std::sqrt(2.0 * (14.0 / 3.0));
  CHECK(pearson(xs, ys) == doctest::Approx(expect));
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), NumericError);
  CHECK_THROWS_AS(pearson({1.0}, {1.0, 2.0}), ConfigError);
}

TEST_CASE("variance probe reports presynaptic variances in order") {
  TraceRecorder trace;
  NeuronTrace n1;
  n1.name = "a";
  n1.presyn_variance = 1.5;
  NeuronTrace n2;
  n2.name = "b";
  n2.presyn_variance = 2.5;
  trace.neurons.push_back(std::move(n1));
  trace.neurons.push_back(std::move(n2));
  auto vars = variance_probe(trace);
  REQUIRE(vars.size() == 2);
  CHECK(vars[0] == 1.5);
  CHECK(vars[1] == 2.5);
}

TEST_CASE("metrics report assembles and serializes") {
  TraceRecorder trace;
  trace.time_steps = 1;
  trace.batch = 1;
  NeuronTrace n;
  n.name = "layer0";
  n.spikes = SpikeTensor(Shape{1, 1, 2, 2}, 4);
  n.spikes.data = {4, 0, 0, 0};
  n.firing_rate = spike_firing_rate(n.spikes);
  n.presyn_variance = 0.8;
  trace.neurons.push_back(std::move(n));
  ConvCost c;
  c.name = "conv0";
  c.cin_per_group = 1;
  c.cout = 1;
  c.k = 1;
  c.hout = 2;
  c.wout = 2;
  c.presyn_fr = 0.25;
  c.n_slices = 1;
  trace.convs.push_back(c);

  LFSIConfig cfg;
  MetricsReport r = build_metrics_report(trace, 4, cfg);
  CHECK(r.firing_rate == doctest::Approx(0.25));
  CHECK(r.layer_names == std::vector<std::string>{"layer0"});
  CHECK(r.per_layer_variance[0] == doctest::Approx(0.8));
  CHECK(r.sops == doctest::Approx(0.25 * 1 * 4 * 1 * 1 * 1 * 4));
  CHECK(r.energy_mj == doctest::Approx(energy_mj(r.sops, r.flops)));

  std::string js = r.to_json();
  for (const char* key : {"firing_rate", "lfsi", "sops", "flops", "energy_mj", "layers"})
    CHECK(js.find(key) != std::string::npos);
  std::string csv = r.to_csv();
  CHECK(csv.find("layer") != std::string::npos);
  CHECK(csv.find("layer0") != std::string::npos);
}
