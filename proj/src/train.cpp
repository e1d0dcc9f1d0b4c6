#include "spikedet/train.hpp"

#include "spikedet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spikedet {

void OptimState::validate() const {
  if (lr <= 0.0) throw ConfigError("OptimState: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("OptimState: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("OptimState: weight_decay must be >= 0");
}

void sgd_step(Network& net, Tape& tape, OptimState& opt) {
  opt.validate();
  net.visit_params([&](const std::string& name, Tensor& w) {
    const Tensor* g = tape.param_grad(&w);
    if (!g) return;
    if (g->shape != w.shape)
      throw ShapeError("sgd_step: gradient shape mismatch for " + name);
    auto it = opt.velocity.find(&w);
    if (it == opt.velocity.end())
      it = opt.velocity.emplace(&w, Tensor(w.shape)).first;
    Tensor& v = it->second;
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      size_t k = static_cast<size_t>(i);
      double step = g->data[k] + opt.weight_decay * w.data[k];
      v.data[k] = opt.momentum * v.data[k] + step;
      w.data[k] -= opt.lr * v.data[k];
    }
  });
}

double forward_backward(Network& net, Tape& tape, const Tensor& batch,
                        const std::vector<int>& labels, ForwardCtx& ctx) {
  if (net.spec.num_classes < 1)
    throw ConfigError("forward_backward: network has no classifier head");
  Var x = tape.leaf(batch);
  Network::Outputs out = net.forward(tape, x, ctx);
  const Tensor& logits = tape.value(out.logits);
  for (double v : logits.data)
    if (!std::isfinite(v)) {
      std::string where = "logits";
      if (ctx.trace)
        for (const NeuronTrace& n : ctx.trace->neurons)
          if (!std::isfinite(n.presyn_variance)) {
            where = n.name;
            break;
          }
      throw NumericError("forward_backward: non-finite activation at " + where);
    }
  Var loss = softmax_cross_entropy(tape, out.logits, labels);
  double l = tape.value(loss).data[0];
  if (!std::isfinite(l)) throw NumericError("forward_backward: non-finite loss");
  tape.backward(loss);
  return l;
}

namespace {

Tensor stack_samples(const std::vector<Tensor>& inputs, const std::vector<int>& idx) {
  const Shape& s0 = inputs[idx[0]].shape;
  Tensor batch(Shape{static_cast<int>(idx.size()) * s0.n, s0.c, s0.h, s0.w});
  std::int64_t per = s0.numel();
  for (size_t b = 0; b < idx.size(); ++b) {
    const Tensor& in = inputs[idx[b]];
    if (in.shape != s0) throw ShapeError("train_toy: inconsistent sample shapes");
    std::copy(in.data.begin(), in.data.end(),
              batch.data.begin() + static_cast<std::int64_t>(b) * per);
  }
  return batch;
}

void draw_blob(Tensor& img, int cx, int cy, double radius, double amp) {
  for (int y = 0; y < img.shape.h; ++y)
    for (int x = 0; x < img.shape.w; ++x) {
      double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      double v = amp * std::exp(-d2 / (2.0 * radius * radius));
      for (int c = 0; c < img.shape.c; ++c) img.at(0, c, y, x) += v;
    }
}

}  // namespace

ToyDataset make_toy_dataset(const std::string& task, const NetworkSpec& spec,
                            int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("make_toy_dataset: samples must be >= 1");
  const int H = 32, W = 32;
  ToyDataset data;
  data.inputs.reserve(static_cast<size_t>(samples));
  data.labels.reserve(static_cast<size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    int label = i % 2;  // balanced by construction
    Tensor img(Shape{1, spec.in_channels, H, W});
    if (task == "patterns") {
      double phase = rng.uniform(0.0, 2.0 * 3.14159265358979);
      double freq = 2.0 * 3.14159265358979 * 3.0 / H;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double axis = (label == 0) ? y : x;
          double v = std::sin(freq * axis + phase);
          for (int c = 0; c < spec.in_channels; ++c)
            img.at(0, c, y, x) = v + 0.3 * rng.normal();
        }
    } else if (task == "blobs") {
      int n_blobs = (label == 0) ? 1 : 3;
      for (int b = 0; b < n_blobs; ++b) {
        int cx = static_cast<int>(rng.uniform(4.0, W - 4.0));
        int cy = static_cast<int>(rng.uniform(4.0, H - 4.0));
        double radius = rng.uniform(1.5, 5.0);
        draw_blob(img, cx, cy, radius, 2.0);
      }
      for (double& v : img.data) v += 0.1 * rng.normal();
    } else {
      throw ConfigError("make_toy_dataset: unknown task '" + task + "'");
    }
    data.inputs.push_back(direct_encode(img, spec.t_steps));
    data.labels.push_back(label);
  }
  return data;
}

double evaluate_accuracy(Network& net, const ToyDataset& data, ForwardCtx& ctx) {
  if (data.inputs.empty()) throw ConfigError("evaluate_accuracy: empty dataset");
  int correct = 0;
  std::vector<int> idx(data.inputs.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor batch = stack_samples(data.inputs, idx);
  Tape tape;
  Var x = tape.leaf(batch);
  Network::Outputs out = net.forward(tape, x, ctx);
  const Tensor& logits = tape.value(out.logits);
  for (size_t b = 0; b < data.inputs.size(); ++b) {
    int best = 0;
    for (int k = 1; k < logits.shape.c; ++k)
      if (logits.at(static_cast<int>(b), k, 0, 0) > logits.at(static_cast<int>(b), best, 0, 0))
        best = k;
    if (best == data.labels[b]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.inputs.size());
}

ToyResult train_toy(const NetworkSpec& spec, const std::string& task,
                    std::uint64_t seed, const ToyTrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train_toy: epochs must be >= 0");
  if (cfg.batch_size < 1 || cfg.train_samples < 1 || cfg.eval_samples < 1)
    throw ConfigError("train_toy: invalid sample or batch counts");
  cfg.opt.validate();

  Rng rng = make_rng(seed);
  Rng data_rng = rng.fork(1);
  Rng init_rng = rng.fork(2);
  Rng shuffle_rng = rng.fork(3);

  ToyDataset train_set = make_toy_dataset(task, spec, cfg.train_samples, data_rng);
  ToyDataset eval_set = make_toy_dataset(task, spec, cfg.eval_samples, data_rng);

  ToyResult result{build_network(spec), {}};
  result.net.init_weights(init_rng);
  OptimState opt = cfg.opt;
  opt.velocity.clear();

  std::vector<int> order(train_set.inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(
                                  shuffle_rng.uniform(0.0, static_cast<double>(i)))]);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      std::vector<int> labels;
      for (int j : idx) labels.push_back(train_set.labels[static_cast<size_t>(j)]);
      Tensor batch = stack_samples(train_set.inputs, idx);
      Tape tape;
      ForwardCtx ctx;
      ctx.time_steps = spec.t_steps;
      ctx.train_bn = true;
      double loss = forward_backward(result.net, tape, batch, labels, ctx);
      if (loss > 1e3)
        throw NumericError("train_toy: loss diverged (" + std::to_string(loss) + ")");
      sgd_step(result.net, tape, opt);
      epoch_loss += loss;
      ++n_batches;
    }

    HistoryRow row;
    row.epoch = epoch;
    row.loss = epoch_loss / std::max(1, n_batches);
    TraceRecorder trace;
    trace.time_steps = spec.t_steps;
    trace.batch = static_cast<int>(eval_set.inputs.size());
    ForwardCtx eval_ctx;
    eval_ctx.time_steps = spec.t_steps;
    eval_ctx.trace = &trace;
    row.acc = evaluate_accuracy(result.net, eval_set, eval_ctx);
    if (!trace.neurons.empty()) {
      std::vector<const SpikeTensor*> layers;
      for (const NeuronTrace& n : trace.neurons) layers.push_back(&n.spikes);
      row.firing_rate = firing_rate(layers);
      row.lfsi = lfsi_network(layers, spec.t_steps, LFSIConfig{});
    }
    result.history.push_back(row);
  }

  if (cfg.epochs == 0) {
    HistoryRow row;
    ForwardCtx eval_ctx;
    eval_ctx.time_steps = spec.t_steps;
    row.acc = evaluate_accuracy(result.net, eval_set, eval_ctx);
    result.history.push_back(row);
  }
  return result;
}

std::string history_to_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "epoch,loss,acc,firing_rate,lfsi\n";
  for (const HistoryRow& r : history)
    os << r.epoch << "," << r.loss << "," << r.acc << "," << r.firing_rate << ","
       << r.lfsi << "\n";
  return os.str();
}

}  // namespace spikedet
