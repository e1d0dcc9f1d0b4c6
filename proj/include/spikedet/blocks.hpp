#pragma once

#include "spikedet/layers.hpp"

#include <array>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace spikedet {

/// Learnable scalar applied to one incoming fusion edge.
struct FusionConstant {
  Tensor value{Shape{1, 1, 1, 1}, 1.0};
};

/// Membrane-shortcut residual block: y = psi(psi(x)) + x.
struct MSBlock {
  std::string name;
  LCB a, b;

  static MSBlock make(const std::string& name, int channels, const ILIFParams& neuron);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
};

/// Downsampling blocks with pooled membrane shortcuts. Variant 1
/// concatenates the pooled input with a 1x1-LCB of it (requires
/// out_ch == 2*in_ch); variant 2 uses a single 1x1-LCB shortcut.
struct EMSBlock {
  std::string name;
  int variant = 1;
  LCB r1, r2;      // residual, r1 carries stride 2
  LCB shortcut;    // applied to the maxpooled input

  static EMSBlock make(const std::string& name, int in_ch, int out_ch, int variant,
                       const ILIFParams& neuron);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
};

/// Deformed-shortcut residual block without downsampling. The residual path
/// wraps stacked MS-Blocks in 1x1-LCBs; the shortcut is a 1x1-LCB (or the
/// identity when `membrane_shortcut` is set, for ablation builds).
struct MDSBlock1 {
  std::string name;
  LCB res_in, res_out;
  std::vector<MSBlock> inner;
  LCB shortcut;
  bool membrane_shortcut = false;

  static MDSBlock1 make(const std::string& name, int channels, int inner_blocks,
                        const ILIFParams& neuron, bool membrane_shortcut = false);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  Var forward_residual(Tape& t, Var x, ForwardCtx& ctx);
  Var forward_shortcut(Tape& t, Var x, ForwardCtx& ctx);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
};

/// Downsampling deformed-shortcut block. The train-form shortcut mixes
/// strided and maxpooled spikes before one 1x1 conv + tdBN; the reparam
/// form splits it into two 1x1 conv paths with the tdBN folded in.
struct MDSBlock2 {
  std::string name;
  LCB res_in;  // 1x1, stride 2
  std::vector<MSBlock> inner;
  LCB res_out;
  ILIFParams sc_neuron;
  Tensor w1{Shape{1, 1, 1, 1}, 0.5};
  Tensor w2{Shape{1, 1, 1, 1}, 0.5};
  ConvSpec sc_conv;
  TdBNParams sc_bn;
  bool reparam_mode = false;

  static MDSBlock2 make(const std::string& name, int in_ch, int out_ch,
                        int inner_blocks, const ILIFParams& neuron);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  Var forward_shortcut(Tape& t, Var x, ForwardCtx& ctx);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);

 private:
  // Regenerated on every reparam forward; kept alive for the backward pass.
  ConvSpec rep_stride_, rep_pool_;
};

/// Fusion block: a two-receptive-field sub-block (two 3x3-LCBs in parallel
/// with a 3x3 depthwise LCB + 1x1-LCB) followed by an MS-Block.
struct SFBlock {
  std::string name;
  LCB a1, a2;  // 3x3 path
  LCB dw, pw;  // depthwise 3x3 then 1x1
  MSBlock ms;

  static SFBlock make(const std::string& name, int channels, const ILIFParams& neuron);
  void init_weights(Rng& rng);
  Var forward(Tape& t, Var x, ForwardCtx& ctx);
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
};

/// Weighted sum of same-shape features: sum_i c_i * x_i.
Var fuse(Tape& t, const std::vector<Var>& features,
         const std::vector<FusionConstant*>& constants);
Tensor fuse(const std::vector<Tensor>& features, const std::vector<double>& constants);

/// Fold a fusion constant into the tdBN that produced the feature.
void fold_fusion_constant(TdBNParams& bn, double c);

/// Multi-direction fusion over three pyramid levels (strides 8/16/32).
/// Passes alternate top-down / bottom-up, `directions` passes total, with a
/// fusion block after every fuse.
class SMFM {
 public:
  struct Step {
    bool top_down = true;
    int src_level = 0, dst_level = 0;
    LCB resample;  // NNI+1x1-LCB (top-down) or stride-2 3x3-LCB (bottom-up)
    FusionConstant c_dst, c_src;
    SFBlock sf;
  };
  struct GraphInfo {
    int passes = 0;
    int resample_edges = 0;
    int fuse_nodes = 0;
    int sf_blocks = 0;
    std::vector<std::pair<int, int>> edges;  // (src_level, dst_level) per resample
  };

  static SMFM make(const std::string& name, std::array<int, 3> channels,
                   int directions, const ILIFParams& neuron);
  void init_weights(Rng& rng);
  std::array<Var, 3> forward(Tape& t, std::array<Var, 3> features, ForwardCtx& ctx);
  GraphInfo graph() const;
  void visit_params(const std::string& prefix, const ParamVisitor& fn);
  void visit_state(const std::string& prefix, const ParamVisitor& fn);
  int directions() const { return directions_; }

 private:
  std::string name_;
  int directions_ = 0;
  std::vector<Step> steps_;
};

enum class BlockKind { MS, EMS1, EMS2, MDS1, MDS2, SF };

struct BlockEntry {
  BlockKind kind = BlockKind::MDS2;
  int inner = 0;
  bool membrane_shortcut = false;  // MDS1 ablation flavor
};

struct StageSpec {
  int channels = 64;
  std::vector<BlockEntry> blocks;
};

struct NetworkSpec {
  int in_channels = 3;
  double width = 1.0;
  int t_steps = 1;
  ILIFParams neuron;
  int encoding_channels = 64;
  std::vector<StageSpec> stages;
  int fusion_directions = 0;  // 0 disables the neck
  bool with_sppf_slot = true; // pass-through slot after the last stage
  int num_classes = 0;        // >0 adds a 1x1 spiking classifier head

  static NetworkSpec mdsnet(int depth);
  void validate() const;
  int scaled(int base_channels) const;
};

using Block = std::variant<MSBlock, EMSBlock, MDSBlock1, MDSBlock2, SFBlock>;

Var block_forward(Block& b, Tape& t, Var x, ForwardCtx& ctx);
void block_init(Block& b, Rng& rng);
void block_visit_params(Block& b, const std::string& prefix, const ParamVisitor& fn);
void block_visit_state(Block& b, const std::string& prefix, const ParamVisitor& fn);

class Network {
 public:
  struct Stage {
    std::vector<Block> blocks;
    int out_ch = 0;
  };
  struct Outputs {
    std::vector<Var> stage_outputs;
    std::array<Var, 3> pyramid{};  // strides 8/16/32 (post-neck when present)
    Var last;                      // deepest feature
    Var logits;                    // valid when the spec has a head
  };

  NetworkSpec spec;
  ConvSpec encoding_conv;
  TdBNParams encoding_bn;
  std::vector<Stage> stages;
  std::optional<SMFM> neck;
  ILIFParams head_neuron;
  ConvSpec head_conv;  // valid when spec.num_classes > 0

  void init_weights(Rng& rng);
  Outputs forward(Tape& t, Var input, ForwardCtx& ctx);
  void visit_params(const ParamVisitor& fn);
  void visit_state(const ParamVisitor& fn);
  std::int64_t param_count();
};

Network build_network(const NetworkSpec& spec);

}  // namespace spikedet
