#include "spikedet/layers.hpp"

#include <Eigen/Core>

namespace spikedet {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

struct ConvDims {
  int cin_g, cout_g, hout, wout;
  std::int64_t rows;  // cin_g * k * k
  std::int64_t cols;  // hout * wout
};

ConvDims dims_for(const ConvSpec& s, const Shape& in) {
  ConvDims d;
  d.cin_g = s.in_ch / s.groups;
  d.cout_g = s.out_ch / s.groups;
  d.hout = (in.h + 2 * s.padding - s.k) / s.stride + 1;
  d.wout = (in.w + 2 * s.padding - s.k) / s.stride + 1;
  d.rows = static_cast<std::int64_t>(d.cin_g) * s.k * s.k;
  d.cols = static_cast<std::int64_t>(d.hout) * d.wout;
  return d;
}

void im2col(const Tensor& x, int n, int g, const ConvSpec& s, const ConvDims& d,
            double* col) {
  const int cin_g = d.cin_g;
  for (int ci = 0; ci < cin_g; ++ci) {
    int c = g * cin_g + ci;
    for (int ky = 0; ky < s.k; ++ky)
      for (int kx = 0; kx < s.k; ++kx) {
        double* row = col + ((static_cast<std::int64_t>(ci) * s.k + ky) * s.k + kx) * d.cols;
        for (int oy = 0; oy < d.hout; ++oy) {
          int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= x.shape.h) {
            std::fill(row + static_cast<std::int64_t>(oy) * d.wout,
                      row + static_cast<std::int64_t>(oy + 1) * d.wout, 0.0);
            continue;
          }
          for (int ox = 0; ox < d.wout; ++ox) {
            int ix = ox * s.stride - s.padding + kx;
            row[static_cast<std::int64_t>(oy) * d.wout + ox] =
                (ix < 0 || ix >= x.shape.w) ? 0.0 : x.at(n, c, iy, ix);
          }
        }
      }
  }
}

void col2im_add(const double* col, int n, int g, const ConvSpec& s,
                const ConvDims& d, Tensor& dx) {
  const int cin_g = d.cin_g;
  for (int ci = 0; ci < cin_g; ++ci) {
    int c = g * cin_g + ci;
    for (int ky = 0; ky < s.k; ++ky)
      for (int kx = 0; kx < s.k; ++kx) {
        const double* row = col + ((static_cast<std::int64_t>(ci) * s.k + ky) * s.k + kx) * d.cols;
        for (int oy = 0; oy < d.hout; ++oy) {
          int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= dx.shape.h) continue;
          for (int ox = 0; ox < d.wout; ++ox) {
            int ix = ox * s.stride - s.padding + kx;
            if (ix < 0 || ix >= dx.shape.w) continue;
            dx.at(n, c, iy, ix) += row[static_cast<std::int64_t>(oy) * d.wout + ox];
          }
        }
      }
  }
}

void check_input(const Tensor& x, const ConvSpec& s) {
  s.validate();
  if (x.shape.c != s.in_ch)
    throw ShapeError("conv2d: input has " + std::to_string(x.shape.c) +
                     " channels, spec expects " + std::to_string(s.in_ch));
  if (x.shape.h + 2 * s.padding < s.k || x.shape.w + 2 * s.padding < s.k)
    throw ShapeError("conv2d: spatial dims too small for kernel");
}

Tensor conv_forward(const Tensor& x, const ConvSpec& s) {
  check_input(x, s);
  ConvDims d = dims_for(s, x.shape);
  Tensor out(Shape{x.shape.n, s.out_ch, d.hout, d.wout});
  std::vector<double> col(static_cast<size_t>(d.rows * d.cols));
  for (int n = 0; n < x.shape.n; ++n)
    for (int g = 0; g < s.groups; ++g) {
      im2col(x, n, g, s, d, col.data());
      CMapRM wmat(s.weight.data.data() + static_cast<std::int64_t>(g) * d.cout_g * d.rows,
                  d.cout_g, d.rows);
      CMapRM cmat(col.data(), d.rows, d.cols);
      MapRM omat(out.data.data() +
                     (static_cast<std::int64_t>(n) * s.out_ch + static_cast<std::int64_t>(g) * d.cout_g) * d.cols,
                 d.cout_g, d.cols);
      omat.noalias() = wmat * cmat;
      for (int oc = 0; oc < d.cout_g; ++oc)
        omat.row(oc).array() += s.bias.data[static_cast<size_t>(g * d.cout_g + oc)];
    }
  return out;
}

// dX, dW, dB for a recorded conv.
void conv_backward(const Tensor& x, const ConvSpec& s, const Tensor& dy,
                   Tensor& dx, Tensor& dw, Tensor& db) {
  ConvDims d = dims_for(s, x.shape);
  std::vector<double> col(static_cast<size_t>(d.rows * d.cols));
  std::vector<double> dcol(static_cast<size_t>(d.rows * d.cols));
  for (int n = 0; n < x.shape.n; ++n)
    for (int g = 0; g < s.groups; ++g) {
      im2col(x, n, g, s, d, col.data());
      CMapRM cmat(col.data(), d.rows, d.cols);
      CMapRM gy(dy.data.data() +
                    (static_cast<std::int64_t>(n) * s.out_ch + static_cast<std::int64_t>(g) * d.cout_g) * d.cols,
                d.cout_g, d.cols);
      MapRM gw(dw.data.data() + static_cast<std::int64_t>(g) * d.cout_g * d.rows, d.cout_g, d.rows);
      gw.noalias() += gy * cmat.transpose();
      for (int oc = 0; oc < d.cout_g; ++oc)
        db.data[static_cast<size_t>(g * d.cout_g + oc)] += gy.row(oc).sum();
      CMapRM wmat(s.weight.data.data() + static_cast<std::int64_t>(g) * d.cout_g * d.rows,
                  d.cout_g, d.rows);
      MapRM gc(dcol.data(), d.rows, d.cols);
      gc.noalias() = wmat.transpose() * gy;
      col2im_add(dcol.data(), n, g, s, d, dx);
    }
}

}  // namespace

ConvSpec ConvSpec::make(int in_ch, int out_ch, int k, int stride, int padding,
                        int groups) {
  ConvSpec s;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.k = k;
  s.stride = stride;
  s.padding = (padding < 0) ? k / 2 : padding;
  s.groups = groups;
  s.weight = Tensor(Shape{out_ch, in_ch / groups, k, k});
  s.bias = Tensor(Shape{1, out_ch, 1, 1});
  s.validate();
  return s;
}

void ConvSpec::validate() const {
  if (in_ch < 1 || out_ch < 1 || k < 1 || stride < 1 || padding < 0 || groups < 1)
    throw ConfigError("ConvSpec: invalid dimensions");
  if (in_ch % groups != 0 || out_ch % groups != 0)
    throw ConfigError("ConvSpec: channels not divisible by groups");
  if (weight.shape != Shape{out_ch, in_ch / groups, k, k})
    throw ShapeError("ConvSpec: weight shape mismatch");
  if (bias.numel() != out_ch) throw ShapeError("ConvSpec: bias shape mismatch");
  weight.require_finite("conv weights");
  bias.require_finite("conv bias");
}

Shape ConvSpec::out_shape(const Shape& in) const {
  ConvDims d = dims_for(*this, in);
  return Shape{in.n, out_ch, d.hout, d.wout};
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec) { return conv_forward(x, spec); }

Tensor conv2d(const SpikeTensor& x, const ConvSpec& spec) {
  return conv_forward(x.to_real(), spec);
}

Var conv2d(Tape& t, Var x, ConvSpec* spec, const std::string& name,
           ForwardCtx* ctx, double presyn_fr, bool encoding) {
  Var wv = t.param(&spec->weight);
  Var bv = t.param(&spec->bias);
  const Tensor& vx = t.value(x);
  Tensor out = conv_forward(vx, *spec);
  if (ctx && ctx->trace) {
    ConvCost cost;
    cost.name = name;
    cost.cin_per_group = spec->in_ch / spec->groups;
    cost.cout = spec->out_ch;
    cost.k = spec->k;
    cost.hout = out.shape.h;
    cost.wout = out.shape.w;
    cost.encoding = encoding;
    cost.presyn_fr = presyn_fr;
    cost.n_slices = vx.shape.n;
    ctx->trace->convs.push_back(std::move(cost));
  }
  ConvSpec* sp = spec;
  return t.push(std::move(out), [x, wv, bv, sp](Tape& tp, Var self) {
    const Tensor& dy = tp.grad(self);
    conv_backward(tp.value(x), *sp, dy, tp.grad(x), tp.grad(wv), tp.grad(bv));
  });
}

void init_conv_weights(ConvSpec& spec, Rng& rng) {
  double fan_in = static_cast<double>(spec.in_ch / spec.groups) * spec.k * spec.k;
  // Zero-mean uniform with Var = 2/fan_in.
  double bound = std::sqrt(6.0 / fan_in);
  for (double& w : spec.weight.data) w = rng.uniform(-bound, bound);
  for (double& b : spec.bias.data) b = 0.0;
}

}  // namespace spikedet
