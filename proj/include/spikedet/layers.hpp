#pragma once

#include "spikedet/autodiff.hpp"
#include "spikedet/neuron.hpp"
#include "spikedet/rng.hpp"
#include "spikedet/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace spikedet {

/// 2D cross-correlation parameters plus weights. Weight layout is
/// (out_ch, in_ch/groups, k, k); bias is (1, out_ch, 1, 1).
struct ConvSpec {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, padding = 0, groups = 1;
  Tensor weight;
  Tensor bias;

  static ConvSpec make(int in_ch, int out_ch, int k, int stride = 1,
                       int padding = -1, int groups = 1);
  void validate() const;
  Shape out_shape(const Shape& in) const;
  std::int64_t param_count() const { return weight.numel() + bias.numel(); }
};

/// Threshold-dependent batch norm over (time*batch, H, W) jointly per
/// channel, scaled by alpha*v_th*lambda.
struct TdBNParams {
  Tensor lambda;   // (1,C,1,1)
  Tensor beta;     // (1,C,1,1)
  Tensor mu_inf;   // (1,C,1,1)
  Tensor var_inf;  // (1,C,1,1)
  double alpha = 1.0;
  double v_th = 1.0;
  double eps = 1e-5;
  double momentum = 0.1;
  bool train_mode = false;

  static TdBNParams make(int channels);
  void validate() const;
};

// Pure forwards (no tape).
Tensor conv2d(const Tensor& x, const ConvSpec& spec);
Tensor conv2d(const SpikeTensor& x, const ConvSpec& spec);
Tensor tdbn_forward(const Tensor& x, TdBNParams& p);
ConvSpec fold_tdbn_into_conv(const ConvSpec& c, const TdBNParams& p);
Tensor maxpool2(const Tensor& x);
Tensor stride_downsample(const Tensor& x, int s);
Tensor nni_upsample(const Tensor& x, int f);

enum class NeuronMode { spiking, straight_through };

/// Per-neuron-layer observations captured during a forward pass.
struct NeuronTrace {
  std::string name;
  SpikeTensor spikes;
  double presyn_variance = 0.0;
  double firing_rate = 0.0;  // on the binary-unrolled basis
};

/// Cost bookkeeping for one convolution. `presyn_fr` is the firing rate of
/// the spikes feeding it (1.0 for the real-valued encoding conv).
struct ConvCost {
  std::string name;
  std::int64_t cin_per_group = 0, cout = 0, k = 0, hout = 0, wout = 0;
  bool encoding = false;
  double presyn_fr = 1.0;
  int n_slices = 0;  // leading-axis slices processed (T*B)
};

struct TraceRecorder {
  int time_steps = 1;
  int batch = 1;
  std::vector<NeuronTrace> neurons;
  std::vector<ConvCost> convs;
};

struct ForwardCtx {
  int time_steps = 1;
  NeuronMode mode = NeuronMode::spiking;
  bool train_bn = false;
  TraceRecorder* trace = nullptr;
};

// Tape ops. ConvSpec / TdBNParams pointers register their tensors as
// parameters; gradients land under those tensor addresses.
Var conv2d(Tape& t, Var x, ConvSpec* spec, const std::string& name = {},
           ForwardCtx* ctx = nullptr, double presyn_fr = 1.0, bool encoding = false);
Var tdbn(Tape& t, Var x, TdBNParams* p, bool train_mode);
Var ilif(Tape& t, Var x, const ILIFParams& p, const ForwardCtx& ctx,
         const std::string& name = {});
Var maxpool2(Tape& t, Var x);
Var stride_downsample(Tape& t, Var x, int s);
Var nni_upsample(Tape& t, Var x, int f);

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// I-LIF -> Conv -> tdBN composite; the depthwise flavor uses
/// groups == channels.
struct LCB {
  std::string name;
  ILIFParams neuron;
  ConvSpec conv;
  TdBNParams bn;

  static LCB make(const std::string& name, int in_ch, int out_ch, int k,
                  int stride = 1, const ILIFParams& neuron = {},
                  bool depthwise = false);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  /// Firing rate of the most recent forward's spikes (for cost records).
  double last_fr = 0.0;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  /// Trainable params plus batch-norm running statistics (for serialization).
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
};

/// He-style fan-in scaled zero-mean uniform initialization.
void init_conv_weights(ConvSpec& spec, Rng& rng);

double spike_firing_rate(const SpikeTensor& s);

}  // namespace spikedet
