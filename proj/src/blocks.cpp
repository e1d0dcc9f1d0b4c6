#include "spikedet/blocks.hpp"

namespace spikedet {

MSBlock MSBlock::make(const std::string& name, int channels, const ILIFParams& neuron) {
  MSBlock blk;
  blk.name = name;
  blk.a = LCB::make(name + ".a", channels, channels, 3, 1, neuron);
  blk.b = LCB::make(name + ".b", channels, channels, 3, 1, neuron);
  return blk;
}

void MSBlock::init_weights(Rng& rng) {
  a.init_weights(rng);
  b.init_weights(rng);
}

Var MSBlock::forward(Tape& t, Var x, ForwardCtx& ctx) {
  if (t.value(x).shape.c != a.conv.in_ch)
    throw ShapeError("MSBlock: channel mismatch at " + name);
  Var r = b.forward(t, a.forward(t, x, ctx), ctx);
  return add(t, r, x);
}

void MSBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  a.visit_params(prefix + ".a", fn);
  b.visit_params(prefix + ".b", fn);
}
void MSBlock::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  a.visit_state(prefix + ".a", fn);
  b.visit_state(prefix + ".b", fn);
}

EMSBlock EMSBlock::make(const std::string& name, int in_ch, int out_ch, int variant,
                        const ILIFParams& neuron) {
  if (variant != 1 && variant != 2) throw ConfigError("EMSBlock: variant must be 1 or 2");
  if (variant == 1 && out_ch != 2 * in_ch)
    throw ConfigError("EMSBlock variant 1: out_ch must equal 2*in_ch");
  EMSBlock blk;
  blk.name = name;
  blk.variant = variant;
  blk.r1 = LCB::make(name + ".r1", in_ch, out_ch, 3, 2, neuron);
  blk.r2 = LCB::make(name + ".r2", out_ch, out_ch, 3, 1, neuron);
  int sc_out = (variant == 1) ? out_ch - in_ch : out_ch;
  blk.shortcut = LCB::make(name + ".sc", in_ch, sc_out, 1, 1, neuron);
  return blk;
}

void EMSBlock::init_weights(Rng& rng) {
  r1.init_weights(rng);
  r2.init_weights(rng);
  shortcut.init_weights(rng);
}

Var EMSBlock::forward(Tape& t, Var x, ForwardCtx& ctx) {
  const Shape in = t.value(x).shape;
  if (in.h % 2 != 0 || in.w % 2 != 0)
    throw ShapeError("EMSBlock: spatial dims must be even at " + name);
  Var res = r2.forward(t, r1.forward(t, x, ctx), ctx);
  Var pooled = maxpool2(t, x);
  if (variant == 1) {
    Var sc = concat_channels(t, pooled, shortcut.forward(t, pooled, ctx));
    return add(t, res, sc);
  }
  return add(t, res, shortcut.forward(t, pooled, ctx));
}

void EMSBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  r1.visit_params(prefix + ".r1", fn);
  r2.visit_params(prefix + ".r2", fn);
  shortcut.visit_params(prefix + ".sc", fn);
}
void EMSBlock::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  r1.visit_state(prefix + ".r1", fn);
  r2.visit_state(prefix + ".r2", fn);
  shortcut.visit_state(prefix + ".sc", fn);
}

MDSBlock1 MDSBlock1::make(const std::string& name, int channels, int inner_blocks,
                          const ILIFParams& neuron, bool membrane_shortcut) {
  MDSBlock1 blk;
  blk.name = name;
  blk.membrane_shortcut = membrane_shortcut;
  blk.res_in = LCB::make(name + ".res_in", channels, channels, 1, 1, neuron);
  for (int i = 0; i < inner_blocks; ++i)
    blk.inner.push_back(MSBlock::make(name + ".ms" + std::to_string(i), channels, neuron));
  blk.res_out = LCB::make(name + ".res_out", channels, channels, 1, 1, neuron);
  blk.shortcut = LCB::make(name + ".sc", channels, channels, 1, 1, neuron);
  return blk;
}

void MDSBlock1::init_weights(Rng& rng) {
  res_in.init_weights(rng);
  for (auto& b : inner) b.init_weights(rng);
  res_out.init_weights(rng);
  shortcut.init_weights(rng);
}

Var MDSBlock1::forward_residual(Tape& t, Var x, ForwardCtx& ctx) {
  Var y = res_in.forward(t, x, ctx);
  for (auto& b : inner) y = b.forward(t, y, ctx);
  return res_out.forward(t, y, ctx);
}

Var MDSBlock1::forward_shortcut(Tape& t, Var x, ForwardCtx& ctx) {
  if (membrane_shortcut) return x;
  return shortcut.forward(t, x, ctx);
}

Var MDSBlock1::forward(Tape& t, Var x, ForwardCtx& ctx) {
  if (t.value(x).shape.c != res_in.conv.in_ch)
    throw ShapeError("MDSBlock1: channel mismatch at " + name);
  return add(t, forward_residual(t, x, ctx), forward_shortcut(t, x, ctx));
}

void MDSBlock1::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  res_in.visit_params(prefix + ".res_in", fn);
  for (size_t i = 0; i < inner.size(); ++i)
    inner[i].visit_params(prefix + ".ms" + std::to_string(i), fn);
  res_out.visit_params(prefix + ".res_out", fn);
  if (!membrane_shortcut) shortcut.visit_params(prefix + ".sc", fn);
}
void MDSBlock1::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  res_in.visit_state(prefix + ".res_in", fn);
  for (size_t i = 0; i < inner.size(); ++i)
    inner[i].visit_state(prefix + ".ms" + std::to_string(i), fn);
  res_out.visit_state(prefix + ".res_out", fn);
  if (!membrane_shortcut) shortcut.visit_state(prefix + ".sc", fn);
}

MDSBlock2 MDSBlock2::make(const std::string& name, int in_ch, int out_ch,
                          int inner_blocks, const ILIFParams& neuron) {
  MDSBlock2 blk;
  blk.name = name;
  blk.res_in = LCB::make(name + ".res_in", in_ch, out_ch, 1, 2, neuron);
  for (int i = 0; i < inner_blocks; ++i)
    blk.inner.push_back(MSBlock::make(name + ".ms" + std::to_string(i), out_ch, neuron));
  blk.res_out = LCB::make(name + ".res_out", out_ch, out_ch, 1, 1, neuron);
  blk.sc_neuron = neuron;
  blk.sc_conv = ConvSpec::make(in_ch, out_ch, 1, 1);
  blk.sc_bn = TdBNParams::make(out_ch);
  blk.sc_bn.v_th = neuron.v_th;
  return blk;
}

void MDSBlock2::init_weights(Rng& rng) {
  res_in.init_weights(rng);
  for (auto& b : inner) b.init_weights(rng);
  res_out.init_weights(rng);
  init_conv_weights(sc_conv, rng);
}

Var MDSBlock2::forward_shortcut(Tape& t, Var x, ForwardCtx& ctx) {
  Var spikes = ilif(t, x, sc_neuron, ctx, name + ".sc");
  double fr = (ctx.trace && !ctx.trace->neurons.empty())
                  ? ctx.trace->neurons.back().firing_rate
                  : 1.0;
  Var d_stride = stride_downsample(t, spikes, 2);
  Var d_pool = maxpool2(t, spikes);
  if (!reparam_mode) {
    Var pre = add(t, scale_by_param(t, d_stride, &w1), scale_by_param(t, d_pool, &w2));
    Var y = conv2d(t, pre, &sc_conv, name + ".sc.conv", &ctx, fr, false);
    return tdbn(t, y, &sc_bn, ctx.train_bn);
  }
  // Split form: fold the tdBN into the conv, distribute the mixing weights.
  if (ctx.train_bn) throw ConfigError("MDSBlock2: reparam form requires eval-mode tdBN");
  ConvSpec folded = fold_tdbn_into_conv(sc_conv, sc_bn);
  rep_stride_ = folded;
  rep_pool_ = folded;
  for (double& v : rep_stride_.weight.data) v *= w1.data[0];
  for (double& v : rep_pool_.weight.data) v *= w2.data[0];
  for (double& v : rep_pool_.bias.data) v = 0.0;
  Var ya = conv2d(t, d_stride, &rep_stride_, name + ".sc.conv_s", &ctx, fr, false);
  Var yb = conv2d(t, d_pool, &rep_pool_, name + ".sc.conv_p", &ctx, fr, false);
  return add(t, ya, yb);
}

Var MDSBlock2::forward(Tape& t, Var x, ForwardCtx& ctx) {
  const Shape in = t.value(x).shape;
  if (in.h % 2 != 0 || in.w % 2 != 0)
    throw ShapeError("MDSBlock2: spatial dims must be even at " + name);
  Var y = res_in.forward(t, x, ctx);
  for (auto& b : inner) y = b.forward(t, y, ctx);
  Var res = res_out.forward(t, y, ctx);
  return add(t, res, forward_shortcut(t, x, ctx));
}

void MDSBlock2::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  res_in.visit_params(prefix + ".res_in", fn);
  for (size_t i = 0; i < inner.size(); ++i)
    inner[i].visit_params(prefix + ".ms" + std::to_string(i), fn);
  res_out.visit_params(prefix + ".res_out", fn);
  fn(prefix + ".sc.w1", w1);
  fn(prefix + ".sc.w2", w2);
  fn(prefix + ".sc.conv.weight", sc_conv.weight);
  fn(prefix + ".sc.conv.bias", sc_conv.bias);
  fn(prefix + ".sc.bn.lambda", sc_bn.lambda);
  fn(prefix + ".sc.bn.beta", sc_bn.beta);
}
void MDSBlock2::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  visit_params(prefix, fn);
  fn(prefix + ".sc.bn.mu_inf", sc_bn.mu_inf);
  fn(prefix + ".sc.bn.var_inf", sc_bn.var_inf);
}

SFBlock SFBlock::make(const std::string& name, int channels, const ILIFParams& neuron) {
  SFBlock blk;
  blk.name = name;
  blk.a1 = LCB::make(name + ".a1", channels, channels, 3, 1, neuron);
  blk.a2 = LCB::make(name + ".a2", channels, channels, 3, 1, neuron);
  blk.dw = LCB::make(name + ".dw", channels, channels, 3, 1, neuron, /*depthwise=*/true);
  blk.pw = LCB::make(name + ".pw", channels, channels, 1, 1, neuron);
  blk.ms = MSBlock::make(name + ".ms", channels, neuron);
  return blk;
}

void SFBlock::init_weights(Rng& rng) {
  a1.init_weights(rng);
  a2.init_weights(rng);
  dw.init_weights(rng);
  pw.init_weights(rng);
  ms.init_weights(rng);
}

Var SFBlock::forward(Tape& t, Var x, ForwardCtx& ctx) {
  Var pa = a2.forward(t, a1.forward(t, x, ctx), ctx);
  Var pb = pw.forward(t, dw.forward(t, x, ctx), ctx);
  return ms.forward(t, add(t, pa, pb), ctx);
}

void SFBlock::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  a1.visit_params(prefix + ".a1", fn);
  a2.visit_params(prefix + ".a2", fn);
  dw.visit_params(prefix + ".dw", fn);
  pw.visit_params(prefix + ".pw", fn);
  ms.visit_params(prefix + ".ms", fn);
}
void SFBlock::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  a1.visit_state(prefix + ".a1", fn);
  a2.visit_state(prefix + ".a2", fn);
  dw.visit_state(prefix + ".dw", fn);
  pw.visit_state(prefix + ".pw", fn);
  ms.visit_state(prefix + ".ms", fn);
}

Var fuse(Tape& t, const std::vector<Var>& features,
         const std::vector<FusionConstant*>& constants) {
  if (features.empty() || features.size() != constants.size())
    throw ShapeError("fuse: feature/constant count mismatch");
  Var acc = scale_by_param(t, features[0], &constants[0]->value);
  for (size_t i = 1; i < features.size(); ++i) {
    if (t.value(features[i]).shape != t.value(features[0]).shape)
      throw ShapeError("fuse: shape mismatch");
    acc = add(t, acc, scale_by_param(t, features[i], &constants[i]->value));
  }
  return acc;
}

Tensor fuse(const std::vector<Tensor>& features, const std::vector<double>& constants) {
  if (features.empty() || features.size() != constants.size())
    throw ShapeError("fuse: feature/constant count mismatch");
  Tensor out(features[0].shape);
  for (size_t i = 0; i < features.size(); ++i) {
    if (features[i].shape != out.shape) throw ShapeError("fuse: shape mismatch");
    for (size_t j = 0; j < out.data.size(); ++j)
      out.data[j] += constants[i] * features[i].data[j];
  }
  return out;
}

void fold_fusion_constant(TdBNParams& bn, double c) {
  for (double& v : bn.lambda.data) v *= c;
  for (double& v : bn.beta.data) v *= c;
}

SMFM SMFM::make(const std::string& name, std::array<int, 3> channels, int directions,
                const ILIFParams& neuron) {
  if (directions != 1 && directions != 2 && directions != 4 && directions != 6)
    throw ConfigError("SMFM: directions must be one of 1,2,4,6");
  SMFM m;
  m.name_ = name;
  m.directions_ = directions;
  for (int pass = 0; pass < directions; ++pass) {
    bool top_down = (pass % 2 == 0);
    for (int i = 0; i < 2; ++i) {
      Step s;
      s.top_down = top_down;
      if (top_down) {
        s.src_level = 2 - i;
        s.dst_level = 1 - i;
      } else {
        s.src_level = i;
        s.dst_level = i + 1;
      }
      std::string sn = name + ".p" + std::to_string(pass) + (top_down ? ".td" : ".bu") +
                       std::to_string(i);
      int src_ch = channels[static_cast<size_t>(s.src_level)];
      int dst_ch = channels[static_cast<size_t>(s.dst_level)];
      s.resample = top_down ? LCB::make(sn + ".proj", src_ch, dst_ch, 1, 1, neuron)
                            : LCB::make(sn + ".down", src_ch, dst_ch, 3, 2, neuron);
      s.sf = SFBlock::make(sn + ".sf", dst_ch, neuron);
      m.steps_.push_back(std::move(s));
    }
  }
  return m;
}

void SMFM::init_weights(Rng& rng) {
  for (auto& s : steps_) {
    s.resample.init_weights(rng);
    s.sf.init_weights(rng);
  }
}

std::array<Var, 3> SMFM::forward(Tape& t, std::array<Var, 3> f, ForwardCtx& ctx) {
  for (auto& s : steps_) {
    Var moved;
    if (s.top_down) {
      Var up = nni_upsample(t, f[static_cast<size_t>(s.src_level)], 2);
      moved = s.resample.forward(t, up, ctx);
    } else {
      moved = s.resample.forward(t, f[static_cast<size_t>(s.src_level)], ctx);
    }
    Var fused = fuse(t, {f[static_cast<size_t>(s.dst_level)], moved}, {&s.c_dst, &s.c_src});
    f[static_cast<size_t>(s.dst_level)] = s.sf.forward(t, fused, ctx);
  }
  return f;
}

SMFM::GraphInfo SMFM::graph() const {
  GraphInfo g;
  g.passes = directions_;
  g.resample_edges = static_cast<int>(steps_.size());
  g.fuse_nodes = static_cast<int>(steps_.size());
  g.sf_blocks = static_cast<int>(steps_.size());
  for (const auto& s : steps_) g.edges.emplace_back(s.src_level, s.dst_level);
  return g;
}

void SMFM::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < steps_.size(); ++i) {
    std::string p = prefix + ".step" + std::to_string(i);
    steps_[i].resample.visit_params(p + ".resample", fn);
    fn(p + ".c_dst", steps_[i].c_dst.value);
    fn(p + ".c_src", steps_[i].c_src.value);
    steps_[i].sf.visit_params(p + ".sf", fn);
  }
}
void SMFM::visit_state(const std::string& prefix, const ParamVisitor& fn) {
  for (size_t i = 0; i < steps_.size(); ++i) {
    std::string p = prefix + ".step" + std::to_string(i);
    steps_[i].resample.visit_state(p + ".resample", fn);
    fn(p + ".c_dst", steps_[i].c_dst.value);
    fn(p + ".c_src", steps_[i].c_src.value);
    steps_[i].sf.visit_state(p + ".sf", fn);
  }
}

Var block_forward(Block& b, Tape& t, Var x, ForwardCtx& ctx) {
  return std::visit([&](auto& blk) { return blk.forward(t, x, ctx); }, b);
}
void block_init(Block& b, Rng& rng) {
  std::visit([&](auto& blk) { blk.init_weights(rng); }, b);
}
void block_visit_params(Block& b, const std::string& prefix, const ParamVisitor& fn) {
  std::visit([&](auto& blk) { blk.visit_params(prefix, fn); }, b);
}
void block_visit_state(Block& b, const std::string& prefix, const ParamVisitor& fn) {
  std::visit([&](auto& blk) { blk.visit_state(prefix, fn); }, b);
}

}  // namespace spikedet
