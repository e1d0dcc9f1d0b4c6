#include "spikedet/neuron.hpp"

namespace spikedet {

void ILIFParams::validate() const {
  if (tau < 0.0 || tau >= 1.0) throw ConfigError("ILIFParams: tau must be in [0,1)");
  if (v_th <= 0.0) throw ConfigError("ILIFParams: v_th must be positive");
  if (d_max < 1) throw ConfigError("ILIFParams: d_max must be >= 1");
}

void LIFParams::validate() const {
  if (v_th <= 0.0) throw ConfigError("LIFParams: v_th must be positive");
  if (a <= 0.0) throw ConfigError("LIFParams: a must be positive");
}

namespace {
void check_step_inputs(const MembraneState& state, const Tensor& x) {
  Shape want = x.shape;
  want.n = 1;
  if (x.shape.n != 1) throw ShapeError("neuron step: input must be a single time slice");
  if (state.h.shape != want)
    throw ShapeError("neuron step: state shape " + state.h.shape.str() +
                     " does not match input " + x.shape.str());
  state.h.require_finite("neuron step state");
  x.require_finite("neuron step input");
}
}  // namespace

std::pair<SpikeTensor, MembraneState> ilif_step(const MembraneState& state,
                                                const Tensor& x,
                                                const ILIFParams& p) {
  p.validate();
  check_step_inputs(state, x);
  SpikeTensor spikes(x.shape, p.d_max);
  MembraneState next{Tensor(state.h.shape)};
  for (size_t i = 0; i < x.data.size(); ++i) {
    double u = p.tau * state.h.data[i] + x.data[i];
    int s = clip_int(round_half_away(u), 0, p.d_max);
    spikes.data[i] = s;
    next.h.data[i] = u - p.v_th * s;
  }
  return {std::move(spikes), std::move(next)};
}

std::pair<SpikeTensor, MembraneState> lif_step(const MembraneState& state,
                                               const Tensor& x,
                                               const LIFParams& p) {
  p.validate();
  check_step_inputs(state, x);
  SpikeTensor spikes(x.shape, 1);
  MembraneState next{Tensor(state.h.shape)};
  for (size_t i = 0; i < x.data.size(); ++i) {
    double u = p.tau * state.h.data[i] + x.data[i];
    int s = (u >= p.v_th) ? 1 : 0;
    spikes.data[i] = s;
    next.h.data[i] = u - p.v_th * s;
  }
  return {std::move(spikes), std::move(next)};
}

SpikeTensor ilif_run(const Tensor& x, const ILIFParams& p, int time_steps) {
  p.validate();
  if (time_steps < 1 || x.shape.n % time_steps != 0)
    throw ShapeError("ilif_run: leading axis " + std::to_string(x.shape.n) +
                     " not divisible by time_steps " + std::to_string(time_steps));
  x.require_finite("ilif_run input");
  SpikeTensor spikes(x.shape, p.d_max);
  const std::int64_t slice = x.shape.slice_numel();
  std::vector<double> h(static_cast<size_t>(slice));
  for (int n = 0; n < x.shape.n; ++n) {
    if (n % time_steps == 0) std::fill(h.begin(), h.end(), 0.0);
    const double* xs = x.data.data() + n * slice;
    std::int32_t* os = spikes.data.data() + n * slice;
    for (std::int64_t i = 0; i < slice; ++i) {
      double u = p.tau * h[static_cast<size_t>(i)] + xs[i];
      int s = clip_int(round_half_away(u), 0, p.d_max);
      os[i] = s;
      h[static_cast<size_t>(i)] = u - p.v_th * s;
    }
  }
  return spikes;
}

SpikeTensor unroll_to_binary(const SpikeTensor& s) {
  s.validate();
  Shape out_shape = s.shape;
  out_shape.n = s.shape.n * s.d_max;
  SpikeTensor out(out_shape, 1);
  const std::int64_t slice = s.shape.slice_numel();
  for (int n = 0; n < s.shape.n; ++n) {
    for (int d = 0; d < s.d_max; ++d) {
      const std::int32_t* src = s.data.data() + n * slice;
      std::int32_t* dst = out.data.data() + (static_cast<std::int64_t>(n) * s.d_max + d) * slice;
      for (std::int64_t i = 0; i < slice; ++i) dst[i] = (src[i] > d) ? 1 : 0;
    }
  }
  return out;
}

Tensor rate_decode(const SpikeTensor& s, int time_steps) {
  if (time_steps < 1 || s.shape.n % time_steps != 0)
    throw ShapeError("rate_decode: leading axis not divisible by time_steps");
  const int batch = s.shape.n / time_steps;
  Shape out_shape{batch, s.shape.c, s.shape.h, s.shape.w};
  Tensor out(out_shape);
  const std::int64_t slice = s.shape.slice_numel();
  for (int b = 0; b < batch; ++b) {
    double* dst = out.data.data() + b * slice;
    for (int t = 0; t < time_steps; ++t) {
      const std::int32_t* src = s.data.data() + (static_cast<std::int64_t>(b) * time_steps + t) * slice;
      for (std::int64_t i = 0; i < slice; ++i) dst[i] += src[i];
    }
    for (std::int64_t i = 0; i < slice; ++i) dst[i] /= time_steps;
  }
  return out;
}

}  // namespace spikedet
