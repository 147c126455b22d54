#pragma once

#include <string>
#include <vector>

#include "repose/param_store.hpp"
#include "repose/rng.hpp"
#include "repose/tape.hpp"

namespace repose {

// (kernel, stride, filters)^repeat block notation. `batchnorm == false` is
// the "_u" variant: plain conv + ReLU with a bias term.
struct ConvBlockSpec {
  int kernel = 3;
  int stride = 1;
  int filters = 1;
  int repeat = 1;
  bool batchnorm = true;

  void validate() const {
    if (kernel < 1 || kernel % 2 == 0)
      throw std::invalid_argument("conv block kernel must be odd and >= 1, got " + std::to_string(kernel));
    if (stride < 1) throw std::invalid_argument("conv block stride must be >= 1");
    if (filters < 1) throw std::invalid_argument("conv block filters must be >= 1");
    if (repeat < 1) throw std::invalid_argument("conv block repeat must be >= 1");
  }
};

inline std::vector<int> conv_block_output_dims(const ConvBlockSpec& spec, const std::vector<int>& input_dims) {
  int h = input_dims.at(2), w = input_dims.at(3);
  for (int r = 0; r < spec.repeat; ++r) {
    auto g = conv_geometry(h, w, spec.kernel, spec.stride);
    h = g.out_h;
    w = g.out_w;
  }
  return {input_dims.at(0), spec.filters, h, w};
}

// A series of `repeat` [conv -> ReLU -> batchnorm] repetitions. The literal
// conv/ReLU/batchnorm order is the default; `bn_before_relu` flips it to the
// conventional conv/BN/ReLU order for ablation. No weight sharing: each
// repetition owns its tensors, registered under `prefix`.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;

  ConvBlock(ParamStore<T>& store, const std::string& prefix, ConvBlockSpec spec, int in_channels, Rng& rng,
            bool bn_before_relu = false)
      : spec_(spec), in_channels_(in_channels), bn_before_relu_(bn_before_relu) {
    spec.validate();
    int ch = in_channels;
    for (int r = 0; r < spec.repeat; ++r) {
      Rep rep;
      const std::string base = prefix + "/conv" + std::to_string(r);
      rep.weight = &store.create(base + "/w", {spec.filters, ch, spec.kernel, spec.kernel});
      const double std_dev = std::sqrt(2.0 / (static_cast<double>(ch) * spec.kernel * spec.kernel));
      for (std::int64_t i = 0; i < rep.weight->value.size(); ++i)
        rep.weight->value[i] = static_cast<T>(rng.normal() * std_dev);
      if (spec.batchnorm) {
        rep.gamma = &store.create(base + "/bn_gamma", {spec.filters});
        rep.beta = &store.create(base + "/bn_beta", {spec.filters});
        rep.running_mean = &store.create(base + "/bn_running_mean", {spec.filters}, /*trainable=*/false);
        rep.running_var = &store.create(base + "/bn_running_var", {spec.filters}, /*trainable=*/false);
        rep.gamma->value.fill(T(1));
        rep.running_var->value.fill(T(1));
      } else {
        rep.bias = &store.create(base + "/b", {spec.filters});
        // ReLU-terminated _u blocks start with a small positive bias so no
        // output channel is born dead (zero bias lets background regression
        // silence a channel permanently).
        rep.bias->value.fill(static_cast<T>(0.1));
      }
      reps_.push_back(rep);
      ch = spec.filters;
    }
  }

  int apply(Tape<T>& tape, int x_id, const EvalMode& mode) const {
    const Tensor<T>& x = tape.value(x_id);
    if (x.c() != in_channels_) {
      std::ostringstream os;
      os << "conv_block: input channels " << x.c() << " != expected " << in_channels_ << " (input " << x.shape_string()
         << ", first weight " << reps_.front().weight->value.shape_string() << ")";
      throw std::invalid_argument(os.str());
    }
    int cur = x_id;
    for (const Rep& rep : reps_) {
      int w_id = tape.param(*rep.weight);
      int b_id = rep.bias ? tape.param(*rep.bias) : -1;
      cur = conv2d(tape, cur, w_id, b_id, spec_.stride);
      if (spec_.batchnorm && bn_before_relu_) {
        cur = batchnorm(tape, cur, tape.param(*rep.gamma), tape.param(*rep.beta), *rep.running_mean, *rep.running_var,
                        mode);
        cur = relu(tape, cur);
      } else {
        cur = relu(tape, cur);
        if (spec_.batchnorm)
          cur = batchnorm(tape, cur, tape.param(*rep.gamma), tape.param(*rep.beta), *rep.running_mean,
                          *rep.running_var, mode);
      }
    }
    return cur;
  }

  const ConvBlockSpec& spec() const { return spec_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return spec_.filters; }

  std::int64_t param_count() const {
    std::int64_t total = 0;
    for (const Rep& rep : reps_) {
      total += rep.weight->value.size();
      if (rep.bias) total += rep.bias->value.size();
      if (rep.gamma) total += rep.gamma->value.size() + rep.beta->value.size();
    }
    return total;
  }

  // Forward multiply-accumulate count for one image at the given input size.
  double macs(int in_h, int in_w) const {
    double total = 0.0;
    int h = in_h, w = in_w, ch = in_channels_;
    for (int r = 0; r < spec_.repeat; ++r) {
      auto g = conv_geometry(h, w, spec_.kernel, spec_.stride);
      total += static_cast<double>(spec_.filters) * ch * spec_.kernel * spec_.kernel * g.out_h * g.out_w;
      h = g.out_h;
      w = g.out_w;
      ch = spec_.filters;
    }
    return total;
  }

 private:
  struct Rep {
    Param<T>* weight = nullptr;
    Param<T>* bias = nullptr;
    Param<T>* gamma = nullptr;
    Param<T>* beta = nullptr;
    Param<T>* running_mean = nullptr;
    Param<T>* running_var = nullptr;
  };

  ConvBlockSpec spec_;
  int in_channels_ = 0;
  bool bn_before_relu_ = false;
  std::vector<Rep> reps_;
};

enum class UpdateStrategy { trainable, add, replace };

inline const char* to_string(UpdateStrategy s) {
  switch (s) {
    case UpdateStrategy::trainable: return "trainable";
    case UpdateStrategy::add: return "add";
    case UpdateStrategy::replace: return "replace";
  }
  return "?";
}

inline UpdateStrategy update_strategy_from_string(const std::string& s) {
  if (s == "trainable") return UpdateStrategy::trainable;
  if (s == "add") return UpdateStrategy::add;
  if (s == "replace") return UpdateStrategy::replace;
  throw std::invalid_argument("unknown update strategy: " + s);
}

// Residual mix per the three ablation strategies. `lambda_id` is consulted
// only for the trainable strategy.
template <typename T>
int residual_mix(Tape<T>& tape, int f_id, int delta_id, UpdateStrategy strategy, int lambda_id = -1) {
  switch (strategy) {
    case UpdateStrategy::trainable:
      if (lambda_id < 0) throw std::invalid_argument("residual_mix: trainable strategy requires a lambda param");
      return residual_mix_trainable(tape, f_id, delta_id, lambda_id);
    case UpdateStrategy::add: {
      const Tensor<T>& f = tape.value(f_id);
      const Tensor<T>& d = tape.value(delta_id);
      if (!f.same_shape(d))
        throw std::invalid_argument("residual_mix: shape mismatch " + f.shape_string() + " vs " + d.shape_string());
      return add_op(tape, f_id, delta_id);
    }
    case UpdateStrategy::replace: {
      const Tensor<T>& f = tape.value(f_id);
      const Tensor<T>& d = tape.value(delta_id);
      if (!f.same_shape(d))
        throw std::invalid_argument("residual_mix: shape mismatch " + f.shape_string() + " vs " + d.shape_string());
      return delta_id;
    }
  }
  throw std::logic_error("residual_mix: unreachable");
}

}  // namespace repose
