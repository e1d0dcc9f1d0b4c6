#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikedet/layers.hpp"
#include "spikedet/rng.hpp"

#include <cmath>

using namespace spikedet;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.data) v = rng.normal();
  return t;
}

// Direct quadruple-loop convolution used as an oracle.
Tensor conv_reference(const Tensor& x, const ConvSpec& s) {
  int hout = (x.shape.h + 2 * s.padding - s.k) / s.stride + 1;
  int wout = (x.shape.w + 2 * s.padding - s.k) / s.stride + 1;
  int cin_g = s.in_ch / s.groups;
  int cout_g = s.out_ch / s.groups;
  Tensor out(Shape{x.shape.n, s.out_ch, hout, wout});
  for (int n = 0; n < x.shape.n; ++n)
    for (int oc = 0; oc < s.out_ch; ++oc) {
      int g = oc / cout_g;
      for (int oy = 0; oy < hout; ++oy)
        for (int ox = 0; ox < wout; ++ox) {
          double acc = s.bias.data[static_cast<size_t>(oc)];
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < s.k; ++ky)
              for (int kx = 0; kx < s.k; ++kx) {
                int iy = oy * s.stride - s.padding + ky;
                int ix = ox * s.stride - s.padding + kx;
                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w) continue;
                acc += x.at(n, g * cin_g + ci, iy, ix) *
                       s.weight.at(oc, ci, ky, kx);
              }
          out.at(n, oc, oy, ox) = acc;
        }
    }
  return out;
}

}  // namespace

TEST_CASE("conv2d identity and constants") {
  ConvSpec id = ConvSpec::make(2, 2, 1, 1);
  id.weight.at(0, 0, 0, 0) = 1.0;
  id.weight.at(1, 1, 0, 0) = 1.0;
  Rng rng = make_rng(1);
  Tensor x = random_tensor(Shape{2, 2, 4, 4}, rng);
  Tensor y = conv2d(x, id);
  CHECK(max_abs_diff(x, y) == doctest::Approx(0.0));

  ConvSpec zero = ConvSpec::make(2, 3, 3, 1);
  for (double& b : zero.bias.data) b = 0.75;
  Tensor z = conv2d(x, zero);
  for (double v : z.data) CHECK(v == doctest::Approx(0.75));
}

TEST_CASE("3x3 ones kernel on ones input, padding 1") {
  ConvSpec s = ConvSpec::make(1, 1, 3, 1, 1);
  for (double& w : s.weight.data) w = 1.0;
  Tensor x(Shape{1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, s);
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0));
}

TEST_CASE("conv2d matches the direct-loop oracle") {
  Rng rng = make_rng(2);
  struct Case {
    int cin, cout, k, stride, pad, groups;
  };
  for (Case c : {Case{3, 5, 3, 1, 1, 1}, Case{4, 6, 3, 2, 1, 2}, Case{4, 4, 3, 1, 1, 4},
                 Case{2, 7, 1, 1, 0, 1}, Case{3, 2, 5, 2, 2, 1}}) {
    ConvSpec s = ConvSpec::make(c.cin, c.cout, c.k, c.stride, c.pad, c.groups);
    init_conv_weights(s, rng);
    for (double& b : s.bias.data) b = rng.normal();
    Tensor x = random_tensor(Shape{2, c.cin, 8, 8}, rng);
    CHECK(max_abs_diff(conv2d(x, s), conv_reference(x, s)) < 1e-12);
  }
}

TEST_CASE("conv2d is linear for zero bias") {
  Rng rng = make_rng(3);
  ConvSpec s = ConvSpec::make(3, 4, 3, 1);
  init_conv_weights(s, rng);
  Tensor x = random_tensor(Shape{1, 3, 6, 6}, rng);
  Tensor y = random_tensor(Shape{1, 3, 6, 6}, rng);
  Tensor mix(x.shape);
  for (size_t i = 0; i < mix.data.size(); ++i)
    mix.data[i] = 2.0 * x.data[i] - 0.5 * y.data[i];
  Tensor lhs = conv2d(mix, s);
  Tensor cx = conv2d(x, s);
  Tensor cy = conv2d(y, s);
  Tensor rhs(lhs.shape);
  for (size_t i = 0; i < rhs.data.size(); ++i)
    rhs.data[i] = 2.0 * cx.data[i] - 0.5 * cy.data[i];
  CHECK(max_abs_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng = make_rng(4);
  ConvSpec s = ConvSpec::make(2, 3, 3, 2, 1);
  init_conv_weights(s, rng);
  Tensor x0 = random_tensor(Shape{2, 2, 6, 6}, rng);
  Tape t;
  Var x = t.leaf(x0, true);
  Var y = conv2d(t, x, &s);
  t.backward(y);
  const Tensor* gw = t.param_grad(&s.weight);
  const Tensor* gb = t.param_grad(&s.bias);
  REQUIRE(gw);
  REQUIRE(gb);
  const double eps = 1e-6;
  auto loss_of = [&](const ConvSpec& sp, const Tensor& xin) {
    Tensor out = conv2d(xin, sp);
    double acc = 0.0;
    for (double v : out.data) acc += v;
    return acc;
  };
  for (std::int64_t i = 0; i < s.weight.numel(); i += 7) {
    ConvSpec sp = s, sm = s;
    sp.weight.data[static_cast<size_t>(i)] += eps;
    sm.weight.data[static_cast<size_t>(i)] -= eps;
    double fd = (loss_of(sp, x0) - loss_of(sm, x0)) / (2 * eps);
    CHECK(gw->data[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (std::int64_t i = 0; i < x0.numel(); i += 11) {
    Tensor xp = x0, xm = x0;
    xp.data[static_cast<size_t>(i)] += eps;
    xm.data[static_cast<size_t>(i)] -= eps;
    double fd = (loss_of(s, xp) - loss_of(s, xm)) / (2 * eps);
    CHECK(t.grad(x).data[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("conv spec validation") {
  CHECK_THROWS_AS(ConvSpec::make(3, 4, 3, 1, -1, 2), ConfigError);
  ConvSpec s = ConvSpec::make(2, 2, 3, 1);
  Tensor wrong(Shape{1, 3, 4, 4});
  CHECK_THROWS_AS(conv2d(wrong, s), ShapeError);
}

TEST_CASE("tdbn eval formula") {
  TdBNParams p = TdBNParams::make(1);
  SUBCASE("identity configuration") {
    p.var_inf.data[0] = 1.0 - p.eps;
    Tensor x(Shape{2, 1, 2, 2});
    Rng rng = make_rng(5);
    for (double& v : x.data) v = rng.normal();
    Tensor y = tdbn_forward(x, p);
    CHECK(max_abs_diff(x, y) < 1e-9);
  }
  SUBCASE("direct formula") {
    p.lambda.data[0] = 2.0;
    p.mu_inf.data[0] = 1.0;
    p.var_inf.data[0] = 4.0 - p.eps;
    Tensor x(Shape{1, 1, 1, 1}, 3.0);
    Tensor y = tdbn_forward(x, p);
    CHECK(y.data[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("tdbn train mode normalizes over (T*B, H, W) per channel") {
  Rng rng = make_rng(6);
  TdBNParams p = TdBNParams::make(3);
  p.train_mode = true;
  p.lambda.data = {1.0, 2.0, 0.5};
  p.beta.data = {0.0, -1.0, 0.25};
  Tensor x = random_tensor(Shape{8, 3, 4, 4}, rng);
  for (double& v : x.data) v = 3.0 * v + 1.0;
  Tensor y = tdbn_forward(x, p);
  // Per-channel mean ~= beta, variance ~= (alpha*v_th*lambda)^2.
  for (int c = 0; c < 3; ++c) {
    double m = 0.0, m2 = 0.0;
    int count = 0;
    for (int n = 0; n < 8; ++n)
      for (int i = 0; i < 16; ++i) {
        double v = y.data[static_cast<size_t>((n * 3 + c) * 16 + i)];
        m += v;
        m2 += v * v;
        ++count;
      }
    m /= count;
    m2 = m2 / count - m * m;
    CHECK(m == doctest::Approx(p.beta.data[static_cast<size_t>(c)]).epsilon(1e-6));
    double g = p.lambda.data[static_cast<size_t>(c)];
    CHECK(m2 == doctest::Approx(g * g).epsilon(1e-4));
  }
}

TEST_CASE("tdbn train constant input collapses to beta") {
  TdBNParams p = TdBNParams::make(2);
  p.train_mode = true;
  p.beta.data = {0.5, -0.5};
  Tensor x(Shape{4, 2, 3, 3}, 7.0);
  Tensor y = tdbn_forward(x, p);
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 9; ++i)
        CHECK(y.data[static_cast<size_t>((n * 2 + c) * 9 + i)] ==
              doctest::Approx(p.beta.data[static_cast<size_t>(c)]));
}

TEST_CASE("tdbn running statistics update with momentum") {
  Rng rng = make_rng(7);
  TdBNParams p = TdBNParams::make(1);
  p.train_mode = true;
  Tensor x = random_tensor(Shape{4, 1, 4, 4}, rng);
  double m = tensor_mean(x), v = tensor_variance(x);
  tdbn_forward(x, p);
  CHECK(p.mu_inf.data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * m));
  CHECK(p.var_inf.data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * v));
}

TEST_CASE("tdbn folding worked examples") {
  SUBCASE("weight scaling") {
    ConvSpec c = ConvSpec::make(1, 1, 1, 1);
    c.weight.data[0] = 0.5;
    TdBNParams p = TdBNParams::make(1);
    p.lambda.data[0] = 2.0;
    p.var_inf.data[0] = 4.0 - p.eps;
    ConvSpec f = fold_tdbn_into_conv(c, p);
    CHECK(f.weight.data[0] == doctest::Approx(0.5));
  }
  SUBCASE("bias from running mean and beta") {
    ConvSpec c = ConvSpec::make(1, 1, 1, 1);
    TdBNParams p = TdBNParams::make(1);
    p.lambda.data[0] = 2.0;
    p.mu_inf.data[0] = 1.0;
    p.var_inf.data[0] = 4.0 - p.eps;
    p.beta.data[0] = 0.5;
    ConvSpec f = fold_tdbn_into_conv(c, p);
    CHECK(f.bias.data[0] == doctest::Approx(-0.5));
  }
  SUBCASE("train mode refuses to fold") {
    ConvSpec c = ConvSpec::make(1, 1, 1, 1);
    TdBNParams p = TdBNParams::make(1);
    p.train_mode = true;
    CHECK_THROWS_AS(fold_tdbn_into_conv(c, p), ConfigError);
  }
}

TEST_CASE("tdbn folding equivalence on random instances") {
  Rng rng = make_rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    int cin = 1 + static_cast<int>(rng.uniform(0.0, 4.0));
    int cout = 1 + static_cast<int>(rng.uniform(0.0, 6.0));
    int k = (rng.uniform() < 0.5) ? 1 : 3;
    ConvSpec c = ConvSpec::make(cin, cout, k, 1);
    init_conv_weights(c, rng);
    for (double& b : c.bias.data) b = rng.normal();
    TdBNParams p = TdBNParams::make(cout);
    for (double& v : p.lambda.data) v = rng.uniform(0.2, 2.0);
    for (double& v : p.beta.data) v = rng.normal();
    for (double& v : p.mu_inf.data) v = rng.normal();
    for (double& v : p.var_inf.data) v = rng.uniform(0.1, 3.0);
    Tensor x = random_tensor(Shape{2, cin, 5, 5}, rng);
    Tensor unfused = tdbn_forward(conv2d(x, c), p);
    Tensor folded = conv2d(x, fold_tdbn_into_conv(c, p));
    CHECK(max_abs_diff(unfused, folded) <= 1e-5 * (1.0 + max_abs(unfused)));
  }
}

TEST_CASE("pooling and resampling primitives") {
  Tensor x(Shape{1, 1, 2, 2});
  x.data = {1, 2, 3, 4};
  CHECK(maxpool2(x).data[0] == 4.0);

  Tensor rows(Shape{1, 1, 4, 2});
  rows.data = {1, 1, 2, 2, 3, 3, 4, 4};
  Tensor ds = stride_downsample(rows, 2);
  CHECK(ds.shape.h == 2);
  CHECK(ds.data[0] == 1.0);
  CHECK(ds.data[1] == 3.0);

  Tensor one(Shape{1, 1, 1, 1}, 1.0);
  Tensor up = nni_upsample(one, 2);
  CHECK(up.shape == Shape{1, 1, 2, 2});
  for (double v : up.data) CHECK(v == 1.0);

  Tensor odd(Shape{1, 1, 3, 3});
  CHECK_THROWS_AS(maxpool2(odd), ShapeError);
  CHECK_THROWS_AS(stride_downsample(odd, 2), ShapeError);
}

TEST_CASE("pool/resample gradients") {
  Rng rng = make_rng(9);
  Tensor x0 = random_tensor(Shape{1, 2, 4, 4}, rng);
  const double eps = 1e-6;
  auto fd_check = [&](auto&& op) {
    Tape t;
    Var x = t.leaf(x0, true);
    Var y = op(t, x);
    t.backward(y);
    for (std::int64_t i = 0; i < x0.numel(); ++i) {
      Tensor xp = x0, xm = x0;
      xp.data[static_cast<size_t>(i)] += eps;
      xm.data[static_cast<size_t>(i)] -= eps;
      Tape tp, tm;
      double fp = 0.0, fm = 0.0;
      for (double v : tp.value(op(tp, tp.leaf(xp))).data) fp += v;
      for (double v : tm.value(op(tm, tm.leaf(xm))).data) fm += v;
      CHECK(t.grad(x).data[static_cast<size_t>(i)] ==
            doctest::Approx((fp - fm) / (2 * eps)).epsilon(1e-5).scale(1.0));
    }
  };
  fd_check([](Tape& t, Var x) { return maxpool2(t, x); });
  fd_check([](Tape& t, Var x) { return stride_downsample(t, x, 2); });
  fd_check([](Tape& t, Var x) { return nni_upsample(t, x, 2); });
}

TEST_CASE("ilif tape op matches ilif_run in spiking mode") {
  Rng rng = make_rng(10);
  Tensor x0 = random_tensor(Shape{4, 3, 4, 4}, rng);
  for (double& v : x0.data) v *= 2.0;
  ILIFParams p;
  ForwardCtx ctx;
  ctx.time_steps = 2;
  Tape t;
  Var y = ilif(t, t.leaf(x0), p, ctx, "n");
  SpikeTensor oracle = ilif_run(x0, p, 2);
  for (std::int64_t i = 0; i < x0.numel(); ++i)
    CHECK(t.value(y).data[static_cast<size_t>(i)] ==
          doctest::Approx(static_cast<double>(oracle.data[static_cast<size_t>(i)])));
}

TEST_CASE("ilif straight-through gradients match finite differences") {
  Rng rng = make_rng(11);
  // Keep membranes off half-integers so the clip mask is locally constant.
  Tensor x0(Shape{4, 2, 3, 3});
  for (double& v : x0.data) {
    v = rng.uniform(-1.0, 5.0);
    double r = v - std::floor(v);
    if (std::abs(r - 0.5) < 0.1) v += 0.2;
    if (r < 0.05) v += 0.1;
  }
  ILIFParams p;
  ForwardCtx ctx;
  ctx.time_steps = 2;
  ctx.mode = NeuronMode::straight_through;
  Tape t;
  Var x = t.leaf(x0, true);
  Var y = ilif(t, x, p, ctx, "n");
  t.backward(y);
  const double eps = 1e-5;
  auto loss_of = [&](const Tensor& xin) {
    Tape tp;
    ForwardCtx c2 = ctx;
    double acc = 0.0;
    for (double v : tp.value(ilif(tp, tp.leaf(xin), p, c2, "n")).data) acc += v;
    return acc;
  };
  for (std::int64_t i = 0; i < x0.numel(); i += 3) {
    Tensor xp = x0, xm = x0;
    xp.data[static_cast<size_t>(i)] += eps;
    xm.data[static_cast<size_t>(i)] -= eps;
    double fd = (loss_of(xp) - loss_of(xm)) / (2 * eps);
    CHECK(t.grad(x).data[static_cast<size_t>(i)] ==
          doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("LCB composite") {
  ILIFParams neuron;
  SUBCASE("zero weights produce beta") {
    LCB l = LCB::make("l", 2, 3, 3);
    l.bn.beta.data = {0.1, 0.2, 0.3};
    l.bn.train_mode = false;
    Rng rng = make_rng(12);
    Tensor x(Shape{2, 2, 4, 4});
    for (double& v : x.data) v = rng.normal();
    Tape t;
    ForwardCtx ctx;
    Var y = l.forward(t, t.leaf(x), ctx);
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i)
          CHECK(t.value(y).data[static_cast<size_t>((n * 3 + c) * 16 + i)] ==
                doctest::Approx(l.bn.beta.data[static_cast<size_t>(c)]));
  }
  SUBCASE("shape algebra with stride") {
    LCB l = LCB::make("l", 4, 8, 3, 2);
    Rng rng = make_rng(13);
    l.init_weights(rng);
    Tensor x(Shape{2, 4, 8, 8});
    for (double& v : x.data) v = rng.normal();
    Tape t;
    ForwardCtx ctx;
    Var y = l.forward(t, t.leaf(x), ctx);
    CHECK(t.value(y).shape == Shape{2, 8, 4, 4});
  }
  SUBCASE("depthwise requires matching channels") {
    CHECK_THROWS_AS(LCB::make("l", 2, 4, 3, 1, neuron, true), ConfigError);
    LCB dw = LCB::make("l", 4, 4, 3, 1, neuron, true);
    CHECK(dw.conv.groups == 4);
  }
}

TEST_CASE("depthwise locality") {
  // Perturbing channel 0's depthwise kernel leaves other channels unchanged.
  ILIFParams neuron;
  Rng rng = make_rng(14);
  LCB dw = LCB::make("dw", 3, 3, 3, 1, neuron, true);
  dw.init_weights(rng);
  Tensor x(Shape{1, 3, 6, 6});
  for (double& v : x.data) v = rng.uniform(0.0, 3.0);
  ForwardCtx ctx;
  Tape t1;
  Tensor base = t1.value(dw.forward(t1, t1.leaf(x), ctx));
  for (int i = 0; i < 9; ++i) dw.conv.weight.data[static_cast<size_t>(i)] += 0.5;
  Tape t2;
  Tensor pert = t2.value(dw.forward(t2, t2.leaf(x), ctx));
  for (int c = 1; c < 3; ++c)
    for (int i = 0; i < 36; ++i)
      CHECK(base.data[static_cast<size_t>(c * 36 + i)] ==
            doctest::Approx(pert.data[static_cast<size_t>(c * 36 + i)]));
}

TEST_CASE("weight init is zero-mean with He-style variance") {
  Rng rng = make_rng(15);
  ConvSpec s = ConvSpec::make(64, 128, 3, 1);
  init_conv_weights(s, rng);
  double m = 0.0, m2 = 0.0;
  for (double w : s.weight.data) {
    m += w;
    m2 += w * w;
  }
  m /= static_cast<double>(s.weight.numel());
  m2 /= static_cast<double>(s.weight.numel());
  double fan_in = 64.0 * 9.0;
  CHECK(std::abs(m) < 0.001);
  CHECK(m2 == doctest::Approx(2.0 / fan_in).epsilon(0.05));
  for (double b : s.bias.data) CHECK(b == 0.0);
}

TEST_CASE("trace recorder captures firing rates and conv costs") {
  Rng rng = make_rng(16);
  LCB l = LCB::make("probe", 2, 4, 3);
  l.init_weights(rng);
  Tensor x(Shape{2, 2, 4, 4});
  for (double& v : x.data) v = rng.uniform(0.0, 3.0);
  TraceRecorder trace;
  trace.time_steps = 2;
  trace.batch = 1;
  ForwardCtx ctx;
  ctx.time_steps = 2;
  ctx.trace = &trace;
  Tape t;
  l.forward(t, t.leaf(x), ctx);
  REQUIRE(trace.neurons.size() == 1);
  REQUIRE(trace.convs.size() == 1);
  CHECK(trace.neurons[0].name == "probe");
  CHECK(trace.neurons[0].firing_rate ==
        doctest::Approx(spike_firing_rate(trace.neurons[0].spikes)));
  CHECK(trace.convs[0].presyn_fr == doctest::Approx(trace.neurons[0].firing_rate));
  CHECK(trace.convs[0].cout == 4);
  CHECK(trace.convs[0].k == 3);
}
