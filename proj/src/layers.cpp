#include "spikedet/layers.hpp"

#include <algorithm>
#include <cmath>

namespace spikedet {

TdBNParams TdBNParams::make(int channels) {
  TdBNParams p;
  Shape s{1, channels, 1, 1};
  p.lambda = Tensor(s, 1.0);
  p.beta = Tensor(s, 0.0);
  p.mu_inf = Tensor(s, 0.0);
  p.var_inf = Tensor(s, 1.0);
  return p;
}

void TdBNParams::validate() const {
  if (eps <= 0.0) throw ConfigError("TdBNParams: eps must be positive");
  for (double v : var_inf.data)
    if (v < 0.0) throw ConfigError("TdBNParams: negative running variance");
  if (lambda.shape != beta.shape || lambda.shape != mu_inf.shape ||
      lambda.shape != var_inf.shape)
    throw ShapeError("TdBNParams: parameter shapes disagree");
}

namespace {

struct BnStats {
  std::vector<double> mean, var;
};

BnStats channel_stats(const Tensor& x) {
  const int C = x.shape.c;
  const std::int64_t plane = static_cast<std::int64_t>(x.shape.h) * x.shape.w;
  const std::int64_t m = static_cast<std::int64_t>(x.shape.n) * plane;
  if (m == 0) throw StateError("tdbn: zero-size batch");
  BnStats st;
  st.mean.assign(static_cast<size_t>(C), 0.0);
  st.var.assign(static_cast<size_t>(C), 0.0);
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      double s = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) s += p[i];
      st.mean[static_cast<size_t>(c)] += s;
    }
  for (int c = 0; c < C; ++c) st.mean[static_cast<size_t>(c)] /= static_cast<double>(m);
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < C; ++c) {
      const double* p = x.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      double mu = st.mean[static_cast<size_t>(c)];
      double s = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) s += (p[i] - mu) * (p[i] - mu);
      st.var[static_cast<size_t>(c)] += s;
    }
  for (int c = 0; c < C; ++c) st.var[static_cast<size_t>(c)] /= static_cast<double>(m);
  return st;
}

void apply_norm(const Tensor& x, Tensor& out, const TdBNParams& p,
                const std::vector<double>& mean, const std::vector<double>& var) {
  const int C = x.shape.c;
  const std::int64_t plane = static_cast<std::int64_t>(x.shape.h) * x.shape.w;
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < C; ++c) {
      double gamma = p.alpha * p.v_th * p.lambda.data[static_cast<size_t>(c)];
      double invstd = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + p.eps);
      double mu = mean[static_cast<size_t>(c)];
      double beta = p.beta.data[static_cast<size_t>(c)];
      const double* src = x.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      double* dst = out.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i)
        dst[i] = gamma * (src[i] - mu) * invstd + beta;
    }
}

}  // namespace

Tensor tdbn_forward(const Tensor& x, TdBNParams& p) {
  p.validate();
  if (x.shape.c != p.lambda.shape.c)
    throw ShapeError("tdbn: channel count mismatch");
  Tensor out(x.shape);
  if (p.train_mode) {
    BnStats st = channel_stats(x);
    for (int c = 0; c < x.shape.c; ++c) {
      p.mu_inf.data[static_cast<size_t>(c)] =
          (1.0 - p.momentum) * p.mu_inf.data[static_cast<size_t>(c)] + p.momentum * st.mean[static_cast<size_t>(c)];
      p.var_inf.data[static_cast<size_t>(c)] =
          (1.0 - p.momentum) * p.var_inf.data[static_cast<size_t>(c)] + p.momentum * st.var[static_cast<size_t>(c)];
    }
    apply_norm(x, out, p, st.mean, st.var);
  } else {
    apply_norm(x, out, p, p.mu_inf.data, p.var_inf.data);
  }
  return out;
}

ConvSpec fold_tdbn_into_conv(const ConvSpec& c, const TdBNParams& p) {
  p.validate();
  if (p.train_mode) throw ConfigError("fold_tdbn_into_conv: tdBN must be in eval mode");
  if (c.out_ch != p.lambda.shape.c)
    throw ShapeError("fold_tdbn_into_conv: channel mismatch");
  ConvSpec out = c;
  const std::int64_t per_oc = c.weight.numel() / c.out_ch;
  for (int oc = 0; oc < c.out_ch; ++oc) {
    double scale = p.lambda.data[static_cast<size_t>(oc)] * p.alpha * p.v_th /
                   std::sqrt(p.var_inf.data[static_cast<size_t>(oc)] + p.eps);
    for (std::int64_t i = 0; i < per_oc; ++i)
      out.weight.data[static_cast<size_t>(oc * per_oc + i)] =
          scale * c.weight.data[static_cast<size_t>(oc * per_oc + i)];
    out.bias.data[static_cast<size_t>(oc)] =
        scale * (c.bias.data[static_cast<size_t>(oc)] - p.mu_inf.data[static_cast<size_t>(oc)]) +
        p.beta.data[static_cast<size_t>(oc)];
  }
  return out;
}

Tensor maxpool2(const Tensor& x) {
  if (x.shape.h % 2 != 0 || x.shape.w % 2 != 0)
    throw ShapeError("maxpool2: spatial dims must be even, got " + x.shape.str());
  Tensor out(Shape{x.shape.n, x.shape.c, x.shape.h / 2, x.shape.w / 2});
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < x.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx) {
          double m = x.at(n, c, 2 * y, 2 * xx);
          m = std::max(m, x.at(n, c, 2 * y, 2 * xx + 1));
          m = std::max(m, x.at(n, c, 2 * y + 1, 2 * xx));
          m = std::max(m, x.at(n, c, 2 * y + 1, 2 * xx + 1));
          out.at(n, c, y, xx) = m;
        }
  return out;
}

Tensor stride_downsample(const Tensor& x, int s) {
  if (s < 1 || x.shape.h % s != 0 || x.shape.w % s != 0)
    throw ShapeError("stride_downsample: dims not divisible by stride");
  Tensor out(Shape{x.shape.n, x.shape.c, x.shape.h / s, x.shape.w / s});
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < x.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, y * s, xx * s);
  return out;
}

Tensor nni_upsample(const Tensor& x, int f) {
  if (f < 1) throw ShapeError("nni_upsample: factor must be >= 1");
  Tensor out(Shape{x.shape.n, x.shape.c, x.shape.h * f, x.shape.w * f});
  for (int n = 0; n < x.shape.n; ++n)
    for (int c = 0; c < x.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, y / f, xx / f);
  return out;
}

Var tdbn(Tape& t, Var x, TdBNParams* p, bool train_mode) {
  p->validate();
  Var lv = t.param(&p->lambda);
  Var bv = t.param(&p->beta);
  const Tensor& vx = t.value(x);
  if (vx.shape.c != p->lambda.shape.c) throw ShapeError("tdbn: channel count mismatch");

  std::vector<double> mean, var;
  if (train_mode) {
    BnStats st = channel_stats(vx);
    mean = st.mean;
    var = st.var;
    for (int c = 0; c < vx.shape.c; ++c) {
      p->mu_inf.data[static_cast<size_t>(c)] =
          (1.0 - p->momentum) * p->mu_inf.data[static_cast<size_t>(c)] + p->momentum * mean[static_cast<size_t>(c)];
      p->var_inf.data[static_cast<size_t>(c)] =
          (1.0 - p->momentum) * p->var_inf.data[static_cast<size_t>(c)] + p->momentum * var[static_cast<size_t>(c)];
    }
  } else {
    mean = p->mu_inf.data;
    var = p->var_inf.data;
  }
  Tensor out(vx.shape);
  apply_norm(vx, out, *p, mean, var);

  double avt = p->alpha * p->v_th;
  double eps = p->eps;
  TdBNParams* pp = p;
  return t.push(std::move(out),
                [x, lv, bv, mean, var, avt, eps, train_mode, pp](Tape& tp, Var self) {
    const Tensor& dy = tp.grad(self);
    const Tensor& vx = tp.value(x);
    Tensor& dx = tp.grad(x);
    Tensor& dl = tp.grad(lv);
    Tensor& db = tp.grad(bv);
    const int C = vx.shape.c;
    const std::int64_t plane = static_cast<std::int64_t>(vx.shape.h) * vx.shape.w;
    const double m = static_cast<double>(vx.shape.n) * static_cast<double>(plane);
    for (int c = 0; c < C; ++c) {
      double invstd = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
      double mu = mean[static_cast<size_t>(c)];
      double gamma = avt * pp->lambda.data[static_cast<size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < vx.shape.n; ++n) {
        const double* gp = dy.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        const double* xp = vx.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - mu) * invstd;
        }
      }
      db.data[static_cast<size_t>(c)] += sum_dy;
      dl.data[static_cast<size_t>(c)] += avt * sum_dy_xhat;
      double mean_dy = sum_dy / m;
      double mean_dy_xhat = sum_dy_xhat / m;
      for (int n = 0; n < vx.shape.n; ++n) {
        const double* gp = dy.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        const double* xp = vx.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        double* dp = dx.data.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
        if (train_mode) {
          for (std::int64_t i = 0; i < plane; ++i) {
            double xhat = (xp[i] - mu) * invstd;
            dp[i] += gamma * invstd * (gp[i] - mean_dy - xhat * mean_dy_xhat);
          }
        } else {
          for (std::int64_t i = 0; i < plane; ++i) dp[i] += gamma * invstd * gp[i];
        }
      }
    }
  });
}

double spike_firing_rate(const SpikeTensor& s) {
  if (s.shape.numel() == 0) return 0.0;
  return static_cast<double>(s.spike_sum()) /
         (static_cast<double>(s.shape.numel()) * s.d_max);
}

Var ilif(Tape& t, Var x, const ILIFParams& p, const ForwardCtx& ctx,
         const std::string& name) {
  p.validate();
  const Tensor& vx = t.value(x);
  if (ctx.time_steps < 1 || vx.shape.n % ctx.time_steps != 0)
    throw ShapeError("ilif: leading axis not divisible by time_steps");
  vx.require_finite("ilif input");

  const std::int64_t slice = vx.shape.slice_numel();
  const int T = ctx.time_steps;
  Tensor u(vx.shape);
  Tensor out(vx.shape);
  SpikeTensor spikes(vx.shape, p.d_max);
  std::vector<double> h(static_cast<size_t>(slice));
  const bool st = (ctx.mode == NeuronMode::straight_through);
  for (int n = 0; n < vx.shape.n; ++n) {
    if (n % T == 0) std::fill(h.begin(), h.end(), 0.0);
    const double* xs = vx.data.data() + n * slice;
    double* us = u.data.data() + n * slice;
    double* os = out.data.data() + n * slice;
    std::int32_t* is = spikes.data.data() + n * slice;
    for (std::int64_t i = 0; i < slice; ++i) {
      double uv = p.tau * h[static_cast<size_t>(i)] + xs[i];
      us[i] = uv;
      int si = clip_int(round_half_away(uv), 0, p.d_max);
      is[i] = si;
      double o = st ? std::clamp(uv, 0.0, static_cast<double>(p.d_max))
                    : static_cast<double>(si);
      os[i] = o;
      h[static_cast<size_t>(i)] = uv - p.v_th * o;
    }
  }

  if (ctx.trace) {
    NeuronTrace tr;
    tr.name = name;
    tr.presyn_variance = tensor_variance(vx);
    tr.firing_rate = spike_firing_rate(spikes);
    tr.spikes = std::move(spikes);
    ctx.trace->neurons.push_back(std::move(tr));
  }

  double tau = p.tau, vth = p.v_th;
  int dmax = p.d_max;
  return t.push(std::move(out), [x, u = std::move(u), tau, vth, dmax, T](Tape& tp, Var self) {
    const Tensor& dy = tp.grad(self);
    Tensor& dx = tp.grad(x);
    const std::int64_t slice = u.shape.slice_numel();
    std::vector<double> dh(static_cast<size_t>(slice));
    int samples = u.shape.n / T;
    for (int b = 0; b < samples; ++b) {
      std::fill(dh.begin(), dh.end(), 0.0);
      for (int tt = T - 1; tt >= 0; --tt) {
        std::int64_t n = static_cast<std::int64_t>(b) * T + tt;
        const double* us = u.data.data() + n * slice;
        const double* gs = dy.data.data() + n * slice;
        double* ds = dx.data.data() + n * slice;
        for (std::int64_t i = 0; i < slice; ++i) {
          double sg = ilif_surrogate(us[i], dmax);
          double du = gs[i] * sg + dh[static_cast<size_t>(i)] * (1.0 - vth * sg);
          ds[i] += du;
          dh[static_cast<size_t>(i)] = tau * du;
        }
      }
    }
  });
}

Var maxpool2(Tape& t, Var x) {
  const Tensor& vx = t.value(x);
  Tensor out = maxpool2(vx);
  // Argmax offsets within each 2x2 window, first-wins on ties.
  std::vector<std::int8_t> arg(static_cast<size_t>(out.numel()));
  std::int64_t idx = 0;
  for (int n = 0; n < vx.shape.n; ++n)
    for (int c = 0; c < vx.shape.c; ++c)
      for (int y = 0; y < out.shape.h; ++y)
        for (int xx = 0; xx < out.shape.w; ++xx, ++idx) {
          double best = vx.at(n, c, 2 * y, 2 * xx);
          int bi = 0, k = 0;
          for (int dy0 = 0; dy0 < 2; ++dy0)
            for (int dx0 = 0; dx0 < 2; ++dx0, ++k) {
              double v = vx.at(n, c, 2 * y + dy0, 2 * xx + dx0);
              if (v > best) {
                best = v;
                bi = k;
              }
            }
          arg[static_cast<size_t>(idx)] = static_cast<std::int8_t>(bi);
        }
  return t.push(std::move(out), [x, arg = std::move(arg)](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& dx = tp.grad(x);
    std::int64_t idx = 0;
    for (int n = 0; n < g.shape.n; ++n)
      for (int c = 0; c < g.shape.c; ++c)
        for (int y = 0; y < g.shape.h; ++y)
          for (int xx = 0; xx < g.shape.w; ++xx, ++idx) {
            int k = arg[static_cast<size_t>(idx)];
            dx.at(n, c, 2 * y + k / 2, 2 * xx + k % 2) += g.at(n, c, y, xx);
          }
  });
}

Var stride_downsample(Tape& t, Var x, int s) {
  Tensor out = stride_downsample(t.value(x), s);
  return t.push(std::move(out), [x, s](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (int n = 0; n < g.shape.n; ++n)
      for (int c = 0; c < g.shape.c; ++c)
        for (int y = 0; y < g.shape.h; ++y)
          for (int xx = 0; xx < g.shape.w; ++xx)
            dx.at(n, c, y * s, xx * s) += g.at(n, c, y, xx);
  });
}

Var nni_upsample(Tape& t, Var x, int f) {
  Tensor out = nni_upsample(t.value(x), f);
  return t.push(std::move(out), [x, f](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& dx = tp.grad(x);
    for (int n = 0; n < g.shape.n; ++n)
      for (int c = 0; c < g.shape.c; ++c)
        for (int y = 0; y < g.shape.h; ++y)
          for (int xx = 0; xx < g.shape.w; ++xx)
            dx.at(n, c, y / f, xx / f) += g.at(n, c, y, xx);
  });
}

LCB LCB::make(const std::string& name, int in_ch, int out_ch, int k, int stride,
              const ILIFParams& neuron, bool depthwise) {
  LCB l;
  l.name = name;
  l.neuron = neuron;
  if (depthwise) {
    if (in_ch != out_ch)
      throw ConfigError("LCB: depthwise requires in_ch == out_ch");
    l.conv = ConvSpec::make(in_ch, out_ch, k, stride, -1, in_ch);
  } else {
    l.conv = ConvSpec::make(in_ch, out_ch, k, stride);
  }
  l.bn = TdBNParams::make(out_ch);
  l.bn.v_th = neuron.v_th;
  return l;
}

void LCB::init_weights(Rng& rng) { init_conv_weights(conv, rng); }

Var LCB::forward(Tape& t, Var x, ForwardCtx& ctx) {
  Var spikes = ilif(t, x, neuron, ctx, name);
  // Firing rate of the emitted spikes; feeds the following conv's cost row.
  if (ctx.trace && !ctx.trace->neurons.empty())
    last_fr = ctx.trace->neurons.back().firing_rate;
  Var y = conv2d(t, spikes, &conv, name + ".conv", &ctx, last_fr, false);
  return tdbn(t, y, &bn, ctx.train_bn);
}

void LCB::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".conv.weight", conv.weight);
  fn(prefix + ".conv.bias", conv.bias);
  fn(prefix + ".bn.lambda", bn.lambda);
  fn(prefix + ".bn.beta", bn.beta);
}

void LCB::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  visit_params(prefix, fn);
  fn(prefix + ".bn.mu_inf", bn.mu_inf);
  fn(prefix + ".bn.var_inf", bn.var_inf);
}

}  // namespace spikedet
