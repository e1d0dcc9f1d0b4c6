#include "spikedet/blocks.hpp"

#include <cmath>

namespace spikedet {

int NetworkSpec::scaled(int base_channels) const {
  int c = static_cast<int>(std::lround(base_channels * width));
  return std::max(1, c);
}

NetworkSpec NetworkSpec::mdsnet(int depth) {
  NetworkSpec s;
  s.encoding_channels = 64;
  auto stage = [](int ch, std::vector<BlockEntry> blocks) {
    return StageSpec{ch, std::move(blocks)};
  };
  auto mds2 = [](int inner) { return BlockEntry{BlockKind::MDS2, inner, false}; };
  auto mds1 = [](int inner) { return BlockEntry{BlockKind::MDS1, inner, false}; };
  switch (depth) {
    case 10:
      s.stages = {stage(64, {mds2(0)}), stage(128, {mds2(0)}),
                  stage(256, {mds2(0)}), stage(512, {mds2(0)})};
      break;
    case 18:
      s.stages = {stage(64, {mds2(1)}), stage(128, {mds2(1)}),
                  stage(256, {mds2(1)}), stage(512, {mds2(1)})};
      break;
    case 34:
      s.stages = {stage(64, {mds2(2)}), stage(128, {mds2(1), mds1(1)}),
                  stage(256, {mds2(2), mds1(2)}), stage(512, {mds2(2)})};
      break;
    case 104:
      s.stages = {stage(64, {mds2(2)}), stage(128, {mds2(3), mds1(3)}),
                  stage(256, {mds2(15), mds1(15)}), stage(512, {mds2(3), mds1(3)})};
      break;
    default:
      throw ConfigError("NetworkSpec::mdsnet: depth must be 10, 18, 34 or 104");
  }
  return s;
}

void NetworkSpec::validate() const {
  if (in_channels < 1) throw ConfigError("NetworkSpec: in_channels must be >= 1");
  if (t_steps < 1) throw ConfigError("NetworkSpec: t_steps must be >= 1");
  if (width <= 0.0) throw ConfigError("NetworkSpec: width must be positive");
  if (stages.empty()) throw ConfigError("NetworkSpec: at least one stage required");
  neuron.validate();
  if (fusion_directions != 0 && fusion_directions != 1 && fusion_directions != 2 &&
      fusion_directions != 4 && fusion_directions != 6)
    throw ConfigError("NetworkSpec: fusion_directions must be 0, 1, 2, 4 or 6");
  if (fusion_directions > 0 && stages.size() < 3)
    throw ConfigError("NetworkSpec: the neck needs at least 3 stages");
  for (const auto& st : stages) {
    if (st.channels < 1) throw ConfigError("NetworkSpec: invalid stage channels");
    if (st.blocks.empty()) throw ConfigError("NetworkSpec: empty stage block list");
  }
}

Network build_network(const NetworkSpec& spec) {
  spec.validate();
  Network net;
  net.spec = spec;
  int enc_ch = spec.scaled(spec.encoding_channels);
  net.encoding_conv = ConvSpec::make(spec.in_channels, enc_ch, 3, 2);
  net.encoding_bn = TdBNParams::make(enc_ch);
  net.encoding_bn.v_th = spec.neuron.v_th;

  int in_ch = enc_ch;
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    const StageSpec& ss = spec.stages[si];
    int out_ch = spec.scaled(ss.channels);
    Network::Stage stage;
    stage.out_ch = out_ch;
    int cur = in_ch;
    for (size_t bi = 0; bi < ss.blocks.size(); ++bi) {
      const BlockEntry& e = ss.blocks[bi];
      std::string bname = "stage" + std::to_string(si) + ".block" + std::to_string(bi);
      switch (e.kind) {
        case BlockKind::MS:
          if (cur != out_ch) throw ConfigError("NetworkSpec: MS block needs equal channels");
          stage.blocks.emplace_back(MSBlock::make(bname, out_ch, spec.neuron));
          break;
        case BlockKind::EMS1:
          stage.blocks.emplace_back(EMSBlock::make(bname, cur, out_ch, 1, spec.neuron));
          break;
        case BlockKind::EMS2:
          stage.blocks.emplace_back(EMSBlock::make(bname, cur, out_ch, 2, spec.neuron));
          break;
        case BlockKind::MDS1:
          if (cur != out_ch) throw ConfigError("NetworkSpec: MDS1 block needs equal channels");
          stage.blocks.emplace_back(
              MDSBlock1::make(bname, out_ch, e.inner, spec.neuron, e.membrane_shortcut));
          break;
        case BlockKind::MDS2:
          stage.blocks.emplace_back(MDSBlock2::make(bname, cur, out_ch, e.inner, spec.neuron));
          break;
        case BlockKind::SF:
          if (cur != out_ch) throw ConfigError("NetworkSpec: SF block needs equal channels");
          stage.blocks.emplace_back(SFBlock::make(bname, out_ch, spec.neuron));
          break;
      }
      cur = out_ch;
    }
    net.stages.push_back(std::move(stage));
    in_ch = out_ch;
  }

  if (spec.fusion_directions > 0) {
    size_t ns = net.stages.size();
    std::array<int, 3> ch{net.stages[ns - 3].out_ch, net.stages[ns - 2].out_ch,
                          net.stages[ns - 1].out_ch};
    net.neck = SMFM::make("neck", ch, spec.fusion_directions, spec.neuron);
  }

  if (spec.num_classes > 0) {
    net.head_neuron = spec.neuron;
    net.head_conv = ConvSpec::make(net.stages.back().out_ch, spec.num_classes, 1, 1);
  }
  return net;
}

void Network::init_weights(Rng& rng) {
  init_conv_weights(encoding_conv, rng);
  for (auto& st : stages)
    for (auto& b : st.blocks) block_init(b, rng);
  if (neck) neck->init_weights(rng);
  if (spec.num_classes > 0) init_conv_weights(head_conv, rng);
}

Network::Outputs Network::forward(Tape& t, Var input, ForwardCtx& ctx) {
  Outputs out;
  Var y = conv2d(t, input, &encoding_conv, "encoding.conv", &ctx, 1.0, /*encoding=*/true);
  y = tdbn(t, y, &encoding_bn, ctx.train_bn);
  for (auto& st : stages) {
    for (auto& b : st.blocks) y = block_forward(b, t, y, ctx);
    out.stage_outputs.push_back(y);
  }
  // SpikeSPPF slot is a pass-through.
  if (neck) {
    size_t ns = out.stage_outputs.size();
    std::array<Var, 3> pyramid{out.stage_outputs[ns - 3], out.stage_outputs[ns - 2],
                               out.stage_outputs[ns - 1]};
    out.pyramid = neck->forward(t, pyramid, ctx);
    out.last = out.pyramid[2];
  } else {
    out.last = out.stage_outputs.back();
    if (out.stage_outputs.size() >= 3) {
      size_t ns = out.stage_outputs.size();
      out.pyramid = {out.stage_outputs[ns - 3], out.stage_outputs[ns - 2],
                     out.stage_outputs[ns - 1]};
    }
  }
  if (spec.num_classes > 0) {
    Var spikes = ilif(t, out.last, head_neuron, ctx, "head");
    double fr = (ctx.trace && !ctx.trace->neurons.empty())
                    ? ctx.trace->neurons.back().firing_rate
                    : 1.0;
    Var logits_map = conv2d(t, spikes, &head_conv, "head.conv", &ctx, fr, false);
    Var decoded = mean_over_time(t, logits_map, ctx.time_steps);
    out.logits = global_avg_pool(t, decoded);
  }
  return out;
}

void Network::visit_params(const ParamVisitor& fn) {
  fn("encoding.conv.weight", encoding_conv.weight);
  fn("encoding.conv.bias", encoding_conv.bias);
  fn("encoding.bn.lambda", encoding_bn.lambda);
  fn("encoding.bn.beta", encoding_bn.beta);
  for (auto& st : stages)
    for (auto& b : st.blocks)
      block_visit_params(b, std::visit([](auto& blk) { return blk.name; }, b), fn);
  if (neck) neck->visit_params("neck", fn);
  if (spec.num_classes > 0) {
    fn("head.conv.weight", head_conv.weight);
    fn("head.conv.bias", head_conv.bias);
  }
}

void Network::visit_state(const ParamVisitor& fn) {
  fn("encoding.conv.weight", encoding_conv.weight);
  fn("encoding.conv.bias", encoding_conv.bias);
  fn("encoding.bn.lambda", encoding_bn.lambda);
  fn("encoding.bn.beta", encoding_bn.beta);
  fn("encoding.bn.mu_inf", encoding_bn.mu_inf);
  fn("encoding.bn.var_inf", encoding_bn.var_inf);
  for (auto& st : stages)
    for (auto& b : st.blocks)
      block_visit_state(b, std::visit([](auto& blk) { return blk.name; }, b), fn);
  if (neck) neck->visit_state("neck", fn);
  if (spec.num_classes > 0) {
    fn("head.conv.weight", head_conv.weight);
    fn("head.conv.bias", head_conv.bias);
  }
}

std::int64_t Network::param_count() {
  std::int64_t n = 0;
  visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace spikedet
