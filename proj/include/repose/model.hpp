#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "repose/blocks.hpp"
#include "repose/heatmap.hpp"
#include "repose/kinematics.hpp"
#include "repose/param_store.hpp"
#include "repose/tape.hpp"

namespace repose {

enum class OrderingVariant { hips_out, head_down };

inline const char* to_string(OrderingVariant v) { return v == OrderingVariant::hips_out ? "hips_out" : "head_down"; }
inline OrderingVariant ordering_variant_from_string(const std::string& s) {
  if (s == "hips_out") return OrderingVariant::hips_out;
  if (s == "head_down") return OrderingVariant::head_down;
  throw std::invalid_argument("unknown ordering variant: " + s);
}

struct ReposeConfig {
  int keypoints = 16;
  int input_size = 128;
  int coarsest_size = 16;
  int decoupled_channels = 32;
  int trunk_channels = 64;
  int update_conv_blocks = 4;  // conv blocks inside each kinematic update step
  UpdateStrategy update_strategy = UpdateStrategy::trainable;
  OrderingVariant ordering_variant = OrderingVariant::hips_out;
  int stack_count = 1;
  bool joint_post_update_head = false;
  int head_conv_blocks = 4;    // depth of the per-keypoint prediction heads
  bool bn_before_relu = false; // flip conv/ReLU/BN to conv/BN/ReLU for ablation

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("repose config: " + msg); };
    if (keypoints < 1) fail("keypoints must be >= 1");
    if (input_size < 2) fail("input_size must be >= 2");
    if (coarsest_size < 1) fail("coarsest_size must be >= 1");
    if (input_size % coarsest_size != 0) fail("input_size must be divisible by coarsest_size");
    int ratio = input_size / coarsest_size;
    if ((ratio & (ratio - 1)) != 0 || ratio < 2)
      fail("input_size / coarsest_size must be a power of two >= 2, got " + std::to_string(ratio));
    if (decoupled_channels < 1) fail("decoupled_channels must be >= 1");
    if (trunk_channels < 1) fail("trunk_channels must be >= 1");
    if (update_conv_blocks < 1 || update_conv_blocks > 8) fail("update_conv_blocks must be in [1,8]");
    if (head_conv_blocks < 1) fail("head_conv_blocks must be >= 1");
    if (stack_count < 1) fail("stack_count must be >= 1");
  }
};

// Ordered list of supervised heatmap stacks, all resized to the output
// resolution (== input resolution). `final` aliases the last stack.
struct PosePrediction {
  std::vector<int> stacks;  // tape node ids, each (B, K, out, out)
  std::vector<std::string> labels;
  int final_id = -1;
};

struct UpdateTraceEntry {
  int keypoint = -1;
  int slot = -1;
};
using UpdateTrace = std::vector<UpdateTraceEntry>;

template <typename T>
struct EncodeResult {
  int coarse = -1;                        // (B, trunk, coarsest, coarsest)
  std::vector<std::pair<int, int>> skips; // (resolution, node id), descending resolution
};

// Full RePose network: encoder pyramid, per-keypoint feature decoupling,
// pre/post-update heads, kinematic feature updates over the skeleton
// schedule, and the coarse-to-fine decoder. Supports stacking (stage s > 0
// consumes the image concatenated with the previous stage's final heatmaps).
template <typename T>
class ReposeModel {
 public:
  // Runtime toggles used by ablation and the test harness.
  bool skip_kinematic_update = false;   // bypass the update module entirely
  bool parallel_snapshot_update = false;  // read neighbour features from a per-pass snapshot

  static ReposeModel build(const ReposeConfig& config, const SkeletonGraph& skeleton, std::uint64_t seed) {
    config.validate();
    skeleton.validate();
    if (skeleton.keypoint_count != config.keypoints)
      throw std::invalid_argument("repose config: keypoints " + std::to_string(config.keypoints) +
                                  " != skeleton keypoint count " + std::to_string(skeleton.keypoint_count));
    ReposeModel m;
    m.config_ = config;
    m.skeleton_ = skeleton;
    if (config.ordering_variant == OrderingVariant::head_down)
      std::reverse(m.skeleton_.ordering.begin(), m.skeleton_.ordering.end());
    m.schedule_ = build_schedule(m.skeleton_);
    Rng rng(seed);
    for (int s = 0; s < config.stack_count; ++s) m.stages_.push_back(m.build_stage(s, rng));
    return m;
  }

  const ReposeConfig& config() const { return config_; }
  const SkeletonGraph& skeleton() const { return skeleton_; }
  const UpdateSchedule& schedule() const { return schedule_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  int stage_count() const { return static_cast<int>(stages_.size()); }

  EncodeResult<T> encode(Tape<T>& tape, int image_id, const EvalMode& mode, int stage = 0) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage));
    const Tensor<T>& img = tape.value(image_id);
    if (img.h() != config_.input_size || img.w() != config_.input_size)
      throw std::invalid_argument("encode: image is " + img.shape_string() + ", expected spatial " +
                                  std::to_string(config_.input_size));
    EncodeResult<T> enc;
    int cur = st.stem.apply(tape, image_id, mode);
    int res = config_.input_size;
    for (std::size_t i = 0; i < st.down.size(); ++i) {
      cur = st.down[i].d.apply(tape, cur, mode);
      cur = st.down[i].f.apply(tape, cur, mode);
      res /= 2;
      if (res > config_.coarsest_size) enc.skips.emplace_back(res, cur);
    }
    enc.coarse = cur;
    return enc;
  }

  std::vector<int> decouple(Tape<T>& tape, int coarse_id, const EvalMode& mode, int stage = 0) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage));
    std::vector<int> feats;
    feats.reserve(st.decouple.size());
    for (const auto& v : st.decouple) feats.push_back(v.apply(tape, coarse_id, mode));
    return feats;
  }

  // Single-keypoint 1-channel non-negative head; `post` selects the
  // post-update head bank.
  int predict_keypoint_head(Tape<T>& tape, int feature_id, int keypoint, bool post, const EvalMode& mode,
                            int stage = 0) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage));
    const auto& head = (post ? st.post_heads : st.pre_heads).at(static_cast<std::size_t>(keypoint));
    return head.out.apply(tape, head.trunk.apply(tape, feature_id, mode), mode);
  }

  // K per-keypoint heads concatenated into a (B, K, h, w) stack.
  int predict_keypoint_heads(Tape<T>& tape, const std::vector<int>& features, bool post, const EvalMode& mode,
                             int stage = 0) const {
    std::vector<int> maps;
    maps.reserve(features.size());
    for (std::size_t k = 0; k < features.size(); ++k)
      maps.push_back(predict_keypoint_head(tape, features[k], static_cast<int>(k), post, mode, stage));
    return concat_channels_op(tape, maps);
  }

  // Applies the two-pass schedule. Sequential semantics update features in
  // place so later steps see earlier updates; the snapshot variant freezes
  // neighbour reads at the start of each pass.
  std::vector<int> kinematic_update(Tape<T>& tape, std::vector<int> features, const EvalMode& mode,
                                    UpdateTrace* trace = nullptr, int stage = 0) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage));
    if (features.size() != static_cast<std::size_t>(config_.keypoints))
      throw std::invalid_argument("kinematic_update: expected " + std::to_string(config_.keypoints) +
                                  " feature sets, got " + std::to_string(features.size()));
    std::vector<int> snapshot = features;
    std::optional<UpdatePass> snapshot_pass;
    for (const UpdateStep& step : schedule_.steps) {
      if (parallel_snapshot_update && (!snapshot_pass || *snapshot_pass != step.pass)) {
        snapshot = features;
        snapshot_pass = step.pass;
      }
      const std::vector<int>& source = parallel_snapshot_update ? snapshot : features;
      const int k = step.keypoint;
      const KinSlot& slot = st.kin_slots.at(static_cast<std::size_t>(step.slot));
      std::vector<int> parts{source[static_cast<std::size_t>(k)]};
      for (int j : skeleton_.neighbors(k)) parts.push_back(source[static_cast<std::size_t>(j)]);
      int c = concat_channels_op(tape, parts);
      int delta = slot.g.apply(tape, slot.h.apply(tape, c, mode), mode);
      int lambda_id = slot.lambda ? tape.param(*slot.lambda) : -1;
      features[static_cast<std::size_t>(k)] =
          residual_mix(tape, features[static_cast<std::size_t>(k)], delta, config_.update_strategy, lambda_id);
      if (trace) trace->push_back({k, step.slot});
    }
    return features;
  }

  // Coarse-to-fine decoder: concatenate post-update features, then per
  // resolution upsample x2, concatenate the skip (when one exists), project
  // back to trunk channels and predict a K-channel heatmap stack.
  struct RefineResult {
    std::vector<int> stacks;        // native-resolution decoder stacks, coarse to fine
    std::vector<int> resolutions;
  };
  RefineResult refine(Tape<T>& tape, const std::vector<int>& updated, const EncodeResult<T>& enc,
                      const EvalMode& mode, int stage = 0) const {
    const Stage& st = stages_.at(static_cast<std::size_t>(stage));
    RefineResult out;
    int cur = concat_channels_op(tape, updated);
    int res = config_.coarsest_size;
    for (const auto& step : st.decoder) {
      res *= 2;
      cur = bilinear_resize_op(tape, cur, res, res);
      if (step.has_skip) {
        int skip = -1;
        for (const auto& [r, id] : enc.skips)
          if (r == res) skip = id;
        if (skip < 0) throw std::logic_error("refine: missing skip at resolution " + std::to_string(res));
        cur = concat_channels_op(tape, {cur, skip});
      }
      cur = step.proj.apply(tape, cur, mode);
      out.stacks.push_back(step.head.apply(tape, cur, mode));
      out.resolutions.push_back(res);
    }
    return out;
  }

  PosePrediction forward(Tape<T>& tape, int image_id, const EvalMode& mode, UpdateTrace* trace = nullptr) const {
    const Tensor<T>& img = tape.value(image_id);
    if (img.rank() != 4 || img.c() != 3)
      throw std::invalid_argument("forward: expected (B,3,n,n) image, got " + img.shape_string());
    PosePrediction pred;
    const int out_res = config_.input_size;
    int stage_input = image_id;
    for (int s = 0; s < stage_count(); ++s) {
      const std::string prefix = stage_count() > 1 ? "stage" + std::to_string(s) + "/" : "";
      EncodeResult<T> enc = encode(tape, stage_input, mode, s);
      std::vector<int> feats = decouple(tape, enc.coarse, mode, s);
      const Stage& st = stages_.at(static_cast<std::size_t>(s));

      int pre_stack = predict_keypoint_heads(tape, feats, /*post=*/false, mode, s);
      std::vector<int> updated = skip_kinematic_update ? feats : kinematic_update(tape, feats, mode, trace, s);

      int post_stack;
      if (config_.joint_post_update_head) {
        int cat = concat_channels_op(tape, updated);
        int proj = st.joint_post_proj.apply(tape, cat, mode);
        post_stack = st.joint_post_head.apply(tape, proj, mode);
      } else {
        post_stack = predict_keypoint_heads(tape, updated, /*post=*/true, mode, s);
      }

      RefineResult dec = refine(tape, updated, enc, mode, s);

      pred.stacks.push_back(bilinear_resize_op(tape, pre_stack, out_res, out_res));
      pred.labels.push_back(prefix + "pre_update");
      pred.stacks.push_back(bilinear_resize_op(tape, post_stack, out_res, out_res));
      pred.labels.push_back(prefix + "post_update");
      for (std::size_t i = 0; i < dec.stacks.size(); ++i) {
        pred.stacks.push_back(bilinear_resize_op(tape, dec.stacks[i], out_res, out_res));
        pred.labels.push_back(prefix + "decoder@" + std::to_string(dec.resolutions[i]));
      }
      // Next stage sees the image alongside this stage's final heatmaps.
      if (s + 1 < stage_count()) stage_input = concat_channels_op(tape, {image_id, pred.stacks.back()});
    }
    pred.final_id = pred.stacks.back();
    return pred;
  }

  PosePrediction forward(Tape<T>& tape, const Tensor<T>& image, const EvalMode& mode,
                         UpdateTrace* trace = nullptr) const {
    return forward(tape, tape.leaf(image), mode, trace);
  }

  std::int64_t trainable_param_count() const { return params_.trainable_count(); }

  // Estimated FLOPs (2 x multiply-accumulates of every convolution) for a
  // batch-1 forward pass.
  double flops_estimate() const {
    double macs = 0.0;
    for (int s = 0; s < stage_count(); ++s) {
      const Stage& st = stages_[static_cast<std::size_t>(s)];
      int res = config_.input_size;
      macs += st.stem.macs(res, res);
      for (const auto& stage_down : st.down) {
        macs += stage_down.d.macs(res, res);
        res /= 2;
        macs += stage_down.f.macs(res, res);
      }
      const int cs = config_.coarsest_size;
      for (const auto& v : st.decouple) macs += v.macs(cs, cs);
      for (const auto& h : st.pre_heads) macs += h.trunk.macs(cs, cs) + h.out.macs(cs, cs);
      if (config_.joint_post_update_head) {
        macs += st.joint_post_proj.macs(cs, cs) + st.joint_post_head.macs(cs, cs);
      } else {
        for (const auto& h : st.post_heads) macs += h.trunk.macs(cs, cs) + h.out.macs(cs, cs);
      }
      for (const auto& slot : st.kin_slots) macs += slot.h.macs(cs, cs) + slot.g.macs(cs, cs);
      int dres = cs;
      for (const auto& step : st.decoder) {
        dres *= 2;
        macs += step.proj.macs(dres, dres) + step.head.macs(dres, dres);
      }
    }
    return 2.0 * macs;
  }

  std::string describe() const;

 private:
  struct Head {
    ConvBlock<T> trunk;  // (3,1,dc)^head_conv_blocks
    ConvBlock<T> out;    // (3,1,1)_u
  };
  struct KinSlot {
    ConvBlock<T> h;  // (1,1,dc) projection of the concatenated features
    ConvBlock<T> g;  // (3,1,dc)^update_conv_blocks
    Param<T>* lambda = nullptr;
  };
  struct DownStage {
    ConvBlock<T> d;  // (5,2,trunk)
    ConvBlock<T> f;  // (3,1,trunk)^4
  };
  struct DecoderStep {
    ConvBlock<T> proj;  // (3,1,trunk)
    ConvBlock<T> head;  // (3,1,K)_u
    bool has_skip = false;
  };
  struct Stage {
    ConvBlock<T> stem;
    std::vector<DownStage> down;
    std::vector<ConvBlock<T>> decouple;
    std::vector<Head> pre_heads, post_heads;
    ConvBlock<T> joint_post_proj, joint_post_head;
    std::vector<KinSlot> kin_slots;
    std::vector<DecoderStep> decoder;
  };

  Stage build_stage(int s, Rng& rng) {
    const int K = config_.keypoints;
    const int dc = config_.decoupled_channels;
    const int tc = config_.trunk_channels;
    const bool flip_bn = config_.bn_before_relu;
    const std::string pre = "stage" + std::to_string(s);
    Stage st;

    const int in_ch = s == 0 ? 3 : 3 + K;
    st.stem = ConvBlock<T>(params_, pre + "/encoder/stem", {3, 1, tc, 4, true}, in_ch, rng, flip_bn);
    int n_down = 0;
    for (int r = config_.input_size; r > config_.coarsest_size; r /= 2) ++n_down;
    for (int i = 0; i < n_down; ++i) {
      DownStage ds;
      ds.d = ConvBlock<T>(params_, pre + "/encoder/down" + std::to_string(i) + "/d", {5, 2, tc, 1, true}, tc, rng, flip_bn);
      ds.f = ConvBlock<T>(params_, pre + "/encoder/down" + std::to_string(i) + "/f", {3, 1, tc, 4, true}, tc, rng, flip_bn);
      st.down.push_back(std::move(ds));
    }

    for (int k = 0; k < K; ++k)
      st.decouple.push_back(ConvBlock<T>(params_, pre + "/decouple/k" + std::to_string(k), {1, 1, dc, 1, true}, tc, rng, flip_bn));

    auto make_head = [&](const std::string& name) {
      Head h;
      h.trunk = ConvBlock<T>(params_, name + "/trunk", {3, 1, dc, config_.head_conv_blocks, true}, dc, rng, flip_bn);
      h.out = ConvBlock<T>(params_, name + "/out", {3, 1, 1, 1, false}, dc, rng, flip_bn);
      return h;
    };
    for (int k = 0; k < K; ++k) st.pre_heads.push_back(make_head(pre + "/pre_head/k" + std::to_string(k)));
    if (config_.joint_post_update_head) {
      st.joint_post_proj = ConvBlock<T>(params_, pre + "/post_head/joint/proj", {1, 1, tc, 1, true}, K * dc, rng, flip_bn);
      st.joint_post_head = ConvBlock<T>(params_, pre + "/post_head/joint/out", {3, 1, K, 1, false}, tc, rng, flip_bn);
    } else {
      for (int k = 0; k < K; ++k) st.post_heads.push_back(make_head(pre + "/post_head/k" + std::to_string(k)));
    }

    for (const UpdateStep& step : schedule_.steps) {
      KinSlot slot;
      const int deg = static_cast<int>(skeleton_.neighbors(step.keypoint).size());
      const std::string name = pre + "/kin/slot" + std::to_string(step.slot);
      slot.h = ConvBlock<T>(params_, name + "/h", {1, 1, dc, 1, true}, dc * (1 + deg), rng, flip_bn);
      slot.g = ConvBlock<T>(params_, name + "/g", {3, 1, dc, config_.update_conv_blocks, true}, dc, rng, flip_bn);
      if (config_.update_strategy == UpdateStrategy::trainable) {
        slot.lambda = &params_.create(name + "/lambda", {1});
        slot.lambda->value[0] = T(0);  // update starts as identity
      }
      st.kin_slots.push_back(std::move(slot));
    }

    int prev_ch = K * dc;
    for (int res = config_.coarsest_size * 2; res <= config_.input_size; res *= 2) {
      DecoderStep step;
      step.has_skip = res < config_.input_size;
      const int in = prev_ch + (step.has_skip ? tc : 0);
      const std::string name = pre + "/decoder/res" + std::to_string(res);
      step.proj = ConvBlock<T>(params_, name + "/proj", {3, 1, tc, 1, true}, in, rng, flip_bn);
      step.head = ConvBlock<T>(params_, name + "/head", {3, 1, K, 1, false}, tc, rng, flip_bn);
      st.decoder.push_back(std::move(step));
      prev_ch = tc;
    }
    return st;
  }

  ReposeConfig config_;
  SkeletonGraph skeleton_;
  UpdateSchedule schedule_;
  ParamStore<T> params_;
  std::vector<Stage> stages_;
};

template <typename T>
std::string ReposeModel<T>::describe() const {
  std::ostringstream os;
  const auto& c = config_;
  os << "RePose model\n";
  os << "  keypoints:        " << c.keypoints << "\n";
  os << "  input size:       " << c.input_size << " x " << c.input_size << "\n";
  os << "  coarsest size:    " << c.coarsest_size << " x " << c.coarsest_size << "\n";
  os << "  trunk channels:   " << c.trunk_channels << "\n";
  os << "  decoupled ch:     " << c.decoupled_channels << "\n";
  os << "  update blocks:    " << c.update_conv_blocks << "\n";
  os << "  update strategy:  " << to_string(c.update_strategy) << "\n";
  os << "  ordering variant: " << to_string(c.ordering_variant) << "\n";
  os << "  post-update head: " << (c.joint_post_update_head ? "joint" : "per-keypoint") << "\n";
  os << "  stages:           " << c.stack_count << "\n";
  os << "layer plan (per stage)\n";
  int res = c.input_size;
  os << "  stem f=(3,1," << c.trunk_channels << ")^4 @ " << res << "\n";
  while (res > c.coarsest_size) {
    os << "  d=(5,2," << c.trunk_channels << ") @ " << res << " -> " << res / 2;
    res /= 2;
    os << ", f=(3,1," << c.trunk_channels << ")^4 @ " << res << (res > c.coarsest_size ? "  [skip]" : "") << "\n";
  }
  os << "  decouple: " << c.keypoints << " x v=(1,1," << c.decoupled_channels << ")\n";
  os << "  heads: (3,1," << c.decoupled_channels << ")^" << c.head_conv_blocks << " + (3,1,1)_u per keypoint\n";
  os << "  kinematic: 2K=" << 2 * c.keypoints << " slots of h=(1,1," << c.decoupled_channels << "), g=(3,1,"
     << c.decoupled_channels << ")^" << c.update_conv_blocks;
  if (c.update_strategy == UpdateStrategy::trainable) os << ", lambda";
  os << "\n";
  for (int r = c.coarsest_size * 2; r <= c.input_size; r *= 2)
    os << "  decoder @ " << r << ": upsample x2" << (r < c.input_size ? " + skip concat" : "") << " -> proj (3,1,"
       << c.trunk_channels << ") -> head (3,1," << c.keypoints << ")_u\n";
  os << "totals\n";
  os << "  trainable parameters: " << trainable_param_count() << "\n";
  os << "  FLOPs (batch-1 forward): " << flops_estimate() << "\n";
  return os.str();
}

}  // namespace repose
