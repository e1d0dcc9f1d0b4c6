#pragma once

#include "spikedet/blocks.hpp"
#include "spikedet/metrics.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace spikedet {

struct OptimState {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::map<const Tensor*, Tensor> velocity;

  void validate() const;
};

/// One momentum-SGD update over every registered network parameter, reading
/// gradients accumulated on the tape. Parameters without a gradient are
/// left untouched.
void sgd_step(Network& net, Tape& tape, OptimState& opt);

/// Forward through the net on a (B*T, C, H, W) batch, cross-entropy on the
/// rate-decoded logits, then backward. Gradients stay on the tape.
double forward_backward(Network& net, Tape& tape, const Tensor& batch,
                        const std::vector<int>& labels, ForwardCtx& ctx);

/// Synthetic two-class datasets. `inputs[i]` is one (T, C, H, W) sample.
struct ToyDataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
};

/// task: "patterns" (horizontal vs vertical stripes) or
/// "blobs" (one vs three blobs of random scale).
ToyDataset make_toy_dataset(const std::string& task, const NetworkSpec& spec,
                            int samples, Rng& rng);

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double acc = 0.0;
  double firing_rate = 0.0;
  double lfsi = 0.0;
};

struct ToyResult {
  Network net;
  std::vector<HistoryRow> history;
};

struct ToyTrainConfig {
  int epochs = 30;
  int train_samples = 32;
  int eval_samples = 16;
  int batch_size = 8;
  OptimState opt;
};

/// Deterministic toy training loop; throws NumericError when the loss
/// exceeds 1e3 or turns non-finite.
ToyResult train_toy(const NetworkSpec& spec, const std::string& task,
                    std::uint64_t seed, const ToyTrainConfig& cfg = {});

double evaluate_accuracy(Network& net, const ToyDataset& data, ForwardCtx& ctx);

std::string history_to_csv(const std::vector<HistoryRow>& history);

}  // namespace spikedet
