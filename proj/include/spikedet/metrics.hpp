#pragma once

#include "spikedet/layers.hpp"
#include "spikedet/tensor.hpp"

#include <string>
#include <vector>

namespace spikedet {

struct LFSIConfig {
  int s = 3;  // odd neighborhood side; windows are clipped at borders
  void validate() const;
};

/// 1 where the time-summed spike count reaches time_steps * d_max.
/// Output shape (B, C, H, W).
Tensor saturation_mask(const SpikeTensor& o, int time_steps);

/// Mean local saturation density over clipped SxS windows, averaged over
/// batch, channels and positions.
double lfsi_layer(const SpikeTensor& o, int time_steps, const LFSIConfig& cfg);

/// Unweighted mean of per-layer LFSI values.
double lfsi_network(const std::vector<double>& per_layer);
double lfsi_network(const std::vector<const SpikeTensor*>& layers, int time_steps,
                    const LFSIConfig& cfg);

/// Spikes emitted over the maximum possible on the binary-unrolled basis.
double firing_rate(const std::vector<const SpikeTensor*>& layers);

/// Multiply-and-add count of the real-valued encoding convolutions,
/// counted once per processed time slice.
double count_flops(const TraceRecorder& trace);

/// Accumulate-operation count of the spiking convolutions, with each
/// integer spike of magnitude m costing m accumulations (unrolled basis).
double count_sops(const TraceRecorder& trace, int d_max);

/// Theoretical energy: 0.9 pJ per accumulate, 4.6 pJ per MAC
/// (MACs = FLOPs / 2); result in millijoules.
double energy_mj(double sops, double flops);

/// Per-spiking-layer variance of presynaptic inputs, in forward order.
std::vector<double> variance_probe(const TraceRecorder& trace);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct MetricsReport {
  double firing_rate = 0.0;
  double lfsi = 0.0;
  std::vector<std::string> layer_names;
  std::vector<double> per_layer_lfsi;
  std::vector<double> per_layer_firing_rate;
  std::vector<double> per_layer_variance;
  double sops = 0.0;
  double flops = 0.0;
  double energy_mj = 0.0;
  std::string config_hash;

  std::string to_json() const;
  std::string to_csv() const;
};

MetricsReport build_metrics_report(const TraceRecorder& trace, int d_max,
                                   const LFSIConfig& cfg);

}  // namespace spikedet
