#include "spikedet/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace spikedet {

void LFSIConfig::validate() const {
  if (s < 1 || s % 2 == 0) throw ConfigError("LFSIConfig: S must be odd and >= 1");
}

Tensor saturation_mask(const SpikeTensor& o, int time_steps) {
  o.validate();
  if (time_steps < 1 || o.shape.n % time_steps != 0)
    throw ShapeError("saturation_mask: leading axis not divisible by time_steps");
  const int batch = o.shape.n / time_steps;
  const std::int64_t slice = o.shape.slice_numel();
  const std::int64_t full = static_cast<std::int64_t>(time_steps) * o.d_max;
  Tensor mask(Shape{batch, o.shape.c, o.shape.h, o.shape.w});
  for (int b = 0; b < batch; ++b) {
    double* dst = mask.data.data() + b * slice;
    for (std::int64_t i = 0; i < slice; ++i) {
      std::int64_t sum = 0;
      for (int t = 0; t < time_steps; ++t)
        sum += o.data[static_cast<size_t>((static_cast<std::int64_t>(b) * time_steps + t) * slice + i)];
      dst[i] = (sum == full) ? 1.0 : 0.0;
    }
  }
  return mask;
}

double lfsi_layer(const SpikeTensor& o, int time_steps, const LFSIConfig& cfg) {
  cfg.validate();
  Tensor mask = saturation_mask(o, time_steps);
  const int H = mask.shape.h, W = mask.shape.w;
  const int r = cfg.s / 2;
  // Summed-area table per (b,c) plane; each window is clipped at the borders
  // and normalized by its in-bounds cell count.
  std::vector<double> sat((static_cast<size_t>(H) + 1) * (static_cast<size_t>(W) + 1));
  double total = 0.0;
  std::int64_t positions = 0;
  for (int b = 0; b < mask.shape.n; ++b)
    for (int c = 0; c < mask.shape.c; ++c) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          sat[static_cast<size_t>((y + 1) * (W + 1) + (x + 1))] =
              mask.at(b, c, y, x) + sat[static_cast<size_t>(y * (W + 1) + (x + 1))] +
              sat[static_cast<size_t>((y + 1) * (W + 1) + x)] -
              sat[static_cast<size_t>(y * (W + 1) + x)];
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          int y0 = std::max(0, y - r), y1 = std::min(H - 1, y + r);
          int x0 = std::max(0, x - r), x1 = std::min(W - 1, x + r);
          double cnt = sat[static_cast<size_t>((y1 + 1) * (W + 1) + (x1 + 1))] -
                       sat[static_cast<size_t>(y0 * (W + 1) + (x1 + 1))] -
                       sat[static_cast<size_t>((y1 + 1) * (W + 1) + x0)] +
                       sat[static_cast<size_t>(y0 * (W + 1) + x0)];
          double cells = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
          total += cnt / cells;
          ++positions;
        }
    }
  return positions == 0 ? 0.0 : total / static_cast<double>(positions);
}

double lfsi_network(const std::vector<double>& per_layer) {
  if (per_layer.empty()) throw ConfigError("lfsi_network: empty layer list");
  double s = 0.0;
  for (double v : per_layer) s += v;
  return s / static_cast<double>(per_layer.size());
}

double lfsi_network(const std::vector<const SpikeTensor*>& layers, int time_steps,
                    const LFSIConfig& cfg) {
  if (layers.empty()) throw ConfigError("lfsi_network: empty layer list");
  std::vector<double> per_layer;
  per_layer.reserve(layers.size());
  for (const SpikeTensor* l : layers) per_layer.push_back(lfsi_layer(*l, time_steps, cfg));
  return lfsi_network(per_layer);
}

double firing_rate(const std::vector<const SpikeTensor*>& layers) {
  if (layers.empty()) throw ConfigError("firing_rate: empty layer list");
  double spikes = 0.0, capacity = 0.0;
  for (const SpikeTensor* l : layers) {
    spikes += static_cast<double>(l->spike_sum());
    capacity += static_cast<double>(l->shape.numel()) * l->d_max;
  }
  return capacity == 0.0 ? 0.0 : spikes / capacity;
}

double count_flops(const TraceRecorder& trace) {
  double flops = 0.0;
  for (const ConvCost& c : trace.convs) {
    if (!c.encoding) continue;
    double per_slice = 2.0 * static_cast<double>(c.cin_per_group) * c.cout * c.k * c.k *
                       c.hout * c.wout;
    flops += per_slice * (static_cast<double>(c.n_slices) / trace.batch);
  }
  return flops;
}

double count_sops(const TraceRecorder& trace, int d_max) {
  bool any = false;
  double sops = 0.0;
  for (const ConvCost& c : trace.convs) {
    if (c.encoding) continue;
    any = true;
    double per_step = static_cast<double>(c.cin_per_group) * c.cout * c.k * c.k *
                      c.hout * c.wout;
    double unrolled = (static_cast<double>(c.n_slices) / trace.batch) * d_max;
    sops += c.presyn_fr * unrolled * per_step;
  }
  if (!any && trace.convs.empty())
    throw StateError("count_sops: no recorded firing rates");
  return sops;
}

double energy_mj(double sops, double flops) {
  if (sops < 0.0 || flops < 0.0) throw ConfigError("energy_mj: negative counts");
  const double e_ac_pj = 0.9;
  const double e_mac_pj = 4.6;
  double macs = flops / 2.0;
  return (e_ac_pj * sops + e_mac_pj * macs) * 1e-12 * 1e3;
}

std::vector<double> variance_probe(const TraceRecorder& trace) {
  std::vector<double> out;
  out.reserve(trace.neurons.size());
  for (const NeuronTrace& n : trace.neurons) out.push_back(n.presyn_variance);
  return out;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ConfigError("pearson: need two equal-length series of length >= 2");
  double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

MetricsReport build_metrics_report(const TraceRecorder& trace, int d_max,
                                   const LFSIConfig& cfg) {
  MetricsReport r;
  std::vector<const SpikeTensor*> layers;
  for (const NeuronTrace& n : trace.neurons) {
    layers.push_back(&n.spikes);
    r.layer_names.push_back(n.name);
    r.per_layer_lfsi.push_back(lfsi_layer(n.spikes, trace.time_steps, cfg));
    r.per_layer_firing_rate.push_back(n.firing_rate);
    r.per_layer_variance.push_back(n.presyn_variance);
  }
  if (!layers.empty()) {
    r.firing_rate = firing_rate(layers);
    r.lfsi = lfsi_network(r.per_layer_lfsi);
  }
  r.flops = count_flops(trace);
  r.sops = trace.convs.empty() ? 0.0 : count_sops(trace, d_max);
  r.energy_mj = energy_mj(r.sops, r.flops);
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["firing_rate"] = firing_rate;
  j["lfsi"] = lfsi;
  j["sops"] = sops;
  j["flops"] = flops;
  j["energy_mj"] = energy_mj;
  j["config_hash"] = config_hash;
  nlohmann::json layers = nlohmann::json::array();
  for (size_t i = 0; i < layer_names.size(); ++i) {
    layers.push_back({{"name", layer_names[i]},
                      {"lfsi", per_layer_lfsi[i]},
                      {"firing_rate", per_layer_firing_rate[i]},
                      {"presyn_variance", per_layer_variance[i]}});
  }
  j["layers"] = layers;
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "layer,lfsi,firing_rate,presyn_variance\n";
  for (size_t i = 0; i < layer_names.size(); ++i)
    os << layer_names[i] << "," << per_layer_lfsi[i] << "," << per_layer_firing_rate[i]
       << "," << per_layer_variance[i] << "\n";
  os << "TOTAL," << lfsi << "," << firing_rate << ",\n";
  return os.str();
}

}  // namespace spikedet
