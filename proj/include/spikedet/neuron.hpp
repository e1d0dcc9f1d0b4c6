#pragma once

#include "spikedet/tensor.hpp"

#include <utility>

namespace spikedet {

/// Integer leaky integrate-and-fire parameters. Spikes are integers in
/// [0, d_max]; the membrane soft-resets by v_th per emitted spike.
struct ILIFParams {
  double tau = 0.25;
  double v_th = 1.0;
  int d_max = 4;

  void validate() const;
};

/// Binary leaky integrate-and-fire parameters; `a` is the rectangular
/// surrogate window width.
struct LIFParams {
  double tau = 0.25;
  double v_th = 1.0;
  double a = 1.0;

  void validate() const;
};

/// Retained membrane potential for one layer, a single (1,C,H,W) slice.
struct MembraneState {
  Tensor h;

  static MembraneState zeros(Shape slice) {
    slice.n = 1;
    return MembraneState{Tensor(slice)};
  }
};

/// Half-away-from-zero rounding, so round(1.5)=2 and round(-0.5)=-1.
inline double round_half_away(double x) { return std::round(x); }

inline int clip_int(double x, int lo, int hi) {
  if (x < lo) return lo;
  if (x > hi) return hi;
  return static_cast<int>(x);
}

/// One integer-spike neuron update over a single time slice.
/// u = tau*h + x; spikes = clip(round(u), 0, d_max); h' = u - v_th*spikes.
std::pair<SpikeTensor, MembraneState> ilif_step(const MembraneState& state,
                                                const Tensor& x,
                                                const ILIFParams& p);

/// Rectangular surrogate for the integer spike function: 1 on [0, d_max].
inline double ilif_surrogate(double u, int d_max) {
  return (u >= 0.0 && u <= static_cast<double>(d_max)) ? 1.0 : 0.0;
}

/// One binary-spike neuron update; fires iff u >= v_th (Heaviside with
/// Hea(0)=1), soft reset.
std::pair<SpikeTensor, MembraneState> lif_step(const MembraneState& state,
                                               const Tensor& x,
                                               const LIFParams& p);

/// Rectangular surrogate (1/a on |u - v_th| <= a/2, closed inequality).
inline double lif_surrogate(double u, const LIFParams& p) {
  return (std::abs(u - p.v_th) <= p.a / 2.0) ? 1.0 / p.a : 0.0;
}

/// Run the I-LIF dynamics over a full (T*B,C,H,W) tensor, resetting the
/// membrane every `time_steps` slices (sample boundaries).
SpikeTensor ilif_run(const Tensor& x, const ILIFParams& p, int time_steps);

/// Expand integer spikes into binary micro-steps: count m becomes m ones
/// followed by d_max-m zeros. Output shape (n*d_max, C, H, W), d_max=1.
SpikeTensor unroll_to_binary(const SpikeTensor& s);

/// Per-position mean spike count over the time axis -> (B,C,H,W) reals.
Tensor rate_decode(const SpikeTensor& s, int time_steps);
inline Tensor rate_decode(const SpikeTensor& s) { return rate_decode(s, s.shape.n); }

}  // namespace spikedet
