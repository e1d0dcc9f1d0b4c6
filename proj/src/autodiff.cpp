#include "spikedet/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace spikedet {

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), nullptr, requires_grad);
}

Var Tape::param(Tensor* p) {
  auto it = params_.find(p);
  if (it != params_.end()) return Var{it->second};
  Var v = push(*p, nullptr, true);
  params_[p] = v.id;
  return v;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[check(v)];
  if (!n.grad_set) {
    n.grad = Tensor(n.value.shape);
    n.grad_set = true;
  }
  return n.grad;
}

bool Tape::has_grad(Var v) const { return nodes_[check(v)].grad_set; }

Var Tape::push(Tensor value, std::function<void(Tape&, Var)> backward,
               bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var out) {
  Tensor seed(nodes_[check(out)].value.shape, 1.0);
  backward(out, seed);
}

void Tape::backward(Var out, const Tensor& seed) {
  if (seed.shape != nodes_[check(out)].value.shape)
    throw ShapeError("backward: seed shape mismatch");
  grad(out) = seed;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad_set && n.backward) n.backward(*this, Var{i});
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    n.grad_set = false;
    n.grad = Tensor();
  }
}

const Tensor* Tape::param_grad(const Tensor* p) const {
  auto it = params_.find(p);
  if (it == params_.end()) return nullptr;
  const Node& n = nodes_[static_cast<size_t>(it->second)];
  return n.grad_set ? &n.grad : nullptr;
}

namespace {
void accumulate(Tensor& dst, const Tensor& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}
}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.shape != vb.shape)
    throw ShapeError("add: shape mismatch " + va.shape.str() + " vs " + vb.shape.str());
  Tensor out(va.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] + vb.data[i];
  return t.push(std::move(out), [a, b](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp.grad(a), g);
    accumulate(tp.grad(b), g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.shape != vb.shape) throw ShapeError("sub: shape mismatch");
  Tensor out(va.shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] - vb.data[i];
  return t.push(std::move(out), [a, b](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    accumulate(tp.grad(a), g);
    Tensor& gb = tp.grad(b);
    for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
  });
}

Var scale(Tape& t, Var a, double c) {
  Tensor out = t.value(a);
  for (double& v : out.data) v *= c;
  return t.push(std::move(out), [a, c](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(a);
    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * g.data[i];
  });
}

Var scale_by_param(Tape& t, Var x, Tensor* scalar) {
  if (scalar->numel() != 1) throw ShapeError("scale_by_param: scalar tensor expected");
  Var cv = t.param(scalar);
  double c = t.value(cv).data[0];
  Tensor out = t.value(x);
  for (double& v : out.data) v *= c;
  return t.push(std::move(out), [x, cv, c](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    const Tensor& vx = tp.value(x);
    Tensor& gx = tp.grad(x);
    double dc = 0.0;
    for (size_t i = 0; i < gx.data.size(); ++i) {
      gx.data[i] += c * g.data[i];
      dc += g.data[i] * vx.data[i];
    }
    tp.grad(cv).data[0] += dc;
  });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.shape.n != vb.shape.n || va.shape.h != vb.shape.h || va.shape.w != vb.shape.w)
    throw ShapeError("concat_channels: incompatible shapes");
  Shape os{va.shape.n, va.shape.c + vb.shape.c, va.shape.h, va.shape.w};
  Tensor out(os);
  const std::int64_t plane = static_cast<std::int64_t>(va.shape.h) * va.shape.w;
  for (int n = 0; n < os.n; ++n) {
    std::copy_n(va.data.data() + n * va.shape.slice_numel(), va.shape.slice_numel(),
                out.data.data() + n * os.slice_numel());
    std::copy_n(vb.data.data() + n * vb.shape.slice_numel(), vb.shape.slice_numel(),
                out.data.data() + n * os.slice_numel() + va.shape.c * plane);
  }
  int ca = va.shape.c;
  return t.push(std::move(out), [a, b, ca, plane](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    Shape os = g.shape;
    for (int n = 0; n < os.n; ++n) {
      const double* src = g.data.data() + n * os.slice_numel();
      double* da = ga.data.data() + n * ga.shape.slice_numel();
      double* db = gb.data.data() + n * gb.shape.slice_numel();
      for (std::int64_t i = 0; i < ga.shape.slice_numel(); ++i) da[i] += src[i];
      for (std::int64_t i = 0; i < gb.shape.slice_numel(); ++i)
        db[i] += src[ca * plane + i];
    }
  });
}

Var mean_over_time(Tape& t, Var x, int time_steps) {
  const Tensor& vx = t.value(x);
  if (time_steps < 1 || vx.shape.n % time_steps != 0)
    throw ShapeError("mean_over_time: leading axis not divisible by time_steps");
  int batch = vx.shape.n / time_steps;
  Shape os{batch, vx.shape.c, vx.shape.h, vx.shape.w};
  Tensor out(os);
  const std::int64_t slice = vx.shape.slice_numel();
  for (int b = 0; b < batch; ++b)
    for (int s = 0; s < time_steps; ++s) {
      const double* src = vx.data.data() + (static_cast<std::int64_t>(b) * time_steps + s) * slice;
      double* dst = out.data.data() + b * slice;
      for (std::int64_t i = 0; i < slice; ++i) dst[i] += src[i] / time_steps;
    }
  return t.push(std::move(out), [x, time_steps, slice](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(x);
    for (int n = 0; n < gx.shape.n; ++n) {
      const double* src = g.data.data() + (n / time_steps) * slice;
      double* dst = gx.data.data() + n * slice;
      for (std::int64_t i = 0; i < slice; ++i) dst[i] += src[i] / time_steps;
    }
  });
}

Var global_avg_pool(Tape& t, Var x) {
  const Tensor& vx = t.value(x);
  Shape os{vx.shape.n, vx.shape.c, 1, 1};
  Tensor out(os);
  const std::int64_t plane = static_cast<std::int64_t>(vx.shape.h) * vx.shape.w;
  for (int n = 0; n < vx.shape.n; ++n)
    for (int c = 0; c < vx.shape.c; ++c) {
      const double* src = vx.data.data() + (static_cast<std::int64_t>(n) * vx.shape.c + c) * plane;
      double s = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) s += src[i];
      out.at(n, c, 0, 0) = s / static_cast<double>(plane);
    }
  return t.push(std::move(out), [x, plane](Tape& tp, Var self) {
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(x);
    for (int n = 0; n < gx.shape.n; ++n)
      for (int c = 0; c < gx.shape.c; ++c) {
        double gv = g.at(n, c, 0, 0) / static_cast<double>(plane);
        double* dst = gx.data.data() + (static_cast<std::int64_t>(n) * gx.shape.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) dst[i] += gv;
      }
  });
}

std::vector<double> softmax_probs(const Tensor& logits, int sample) {
  int k = logits.shape.c;
  std::vector<double> p(static_cast<size_t>(k));
  double mx = -1e300;
  for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(sample, c, 0, 0));
  double z = 0.0;
  for (int c = 0; c < k; ++c) {
    p[static_cast<size_t>(c)] = std::exp(logits.at(sample, c, 0, 0) - mx);
    z += p[static_cast<size_t>(c)];
  }
  for (double& v : p) v /= z;
  return p;
}

Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& labels) {
  const Tensor& vl = t.value(logits);
  if (vl.shape.h != 1 || vl.shape.w != 1)
    throw ShapeError("softmax_cross_entropy: expected (B,K,1,1) logits");
  if (static_cast<int>(labels.size()) != vl.shape.n)
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  int batch = vl.shape.n;
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    auto p = softmax_probs(vl, b);
    loss -= std::log(std::max(p[static_cast<size_t>(labels[static_cast<size_t>(b)])], 1e-300));
  }
  loss /= batch;
  Tensor out(Shape{1, 1, 1, 1});
  out.data[0] = loss;
  std::vector<int> lab = labels;
  return t.push(std::move(out), [logits, lab, batch](Tape& tp, Var self) {
    double g = tp.grad(self).data[0];
    const Tensor& vl = tp.value(logits);
    Tensor& gl = tp.grad(logits);
    for (int b = 0; b < batch; ++b) {
      auto p = softmax_probs(vl, b);
      for (int c = 0; c < vl.shape.c; ++c) {
        double d = p[static_cast<size_t>(c)] - (c == lab[static_cast<size_t>(b)] ? 1.0 : 0.0);
        gl.at(b, c, 0, 0) += g * d / batch;
      }
    }
  });
}

}  // namespace spikedet
