#pragma once

#include <string>
#include <vector>

#include "repose/model.hpp"
#include "repose/tape.hpp"
#include "repose/tensor.hpp"

namespace repose {

// Per-example bitset of annotated keypoints; the indicator set of Eq-style
// partial losses and metrics.
struct AnnotationMask {
  std::vector<std::uint8_t> bits;

  int popcount() const {
    int n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
};

namespace detail {

inline void check_partial_mse_args(const std::vector<int>& pred_dims, const std::vector<int>& gt_dims,
                                   const std::vector<AnnotationMask>& masks) {
  if (pred_dims != gt_dims)
    throw std::invalid_argument("partial_mse: shape mismatch between prediction and ground truth");
  if (pred_dims.size() != 4) throw std::invalid_argument("partial_mse: expected rank-4 stacks");
  if (static_cast<int>(masks.size()) != pred_dims[0])
    throw std::invalid_argument("partial_mse: mask count != batch size");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (static_cast<int>(masks[i].bits.size()) != pred_dims[1])
      throw std::invalid_argument("partial_mse: mask width != keypoint count");
    if (masks[i].popcount() == 0)
      throw std::invalid_argument("partial_mse: example " + std::to_string(i) + " has an empty annotation mask");
  }
}

}  // namespace detail

// Partial MSE: mean over the batch of the per-example mean, over annotated
// keypoints only, of the squared heatmap error normalized by the pixel
// count.
template <typename T>
double partial_mse(const Tensor<T>& pred, const Tensor<T>& gt, const std::vector<AnnotationMask>& masks) {
  detail::check_partial_mse_args(pred.dims(), gt.dims(), masks);
  const int B = pred.n(), K = pred.c();
  const std::int64_t plane = static_cast<std::int64_t>(pred.h()) * pred.w();
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    double per_example = 0.0;
    for (int k = 0; k < K; ++k) {
      if (!masks[static_cast<std::size_t>(b)].bits[static_cast<std::size_t>(k)]) continue;
      const T* p = pred.data() + (static_cast<std::size_t>(b) * K + k) * plane;
      const T* q = gt.data() + (static_cast<std::size_t>(b) * K + k) * plane;
      double sq = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
        sq += d * d;
      }
      per_example += sq / static_cast<double>(plane);
    }
    total += per_example / static_cast<double>(masks[static_cast<std::size_t>(b)].popcount());
  }
  return total / static_cast<double>(B);
}

template <typename T>
int partial_mse_op(Tape<T>& tape, int pred_id, const Tensor<T>& gt, const std::vector<AnnotationMask>& masks) {
  const Tensor<T>& pred = tape.value(pred_id);
  detail::check_partial_mse_args(pred.dims(), gt.dims(), masks);
  Tensor<T> y({1});
  y[0] = static_cast<T>(partial_mse(pred, gt, masks));
  const int B = pred.n(), K = pred.c();
  const std::int64_t plane = static_cast<std::int64_t>(pred.h()) * pred.w();
  auto back = [pred_id, gt, masks, B, K, plane](Tape<T>& t, int self) {
    if (!t.needs_grad(pred_id)) return;
    const T g = t.grad(self)[0];
    const Tensor<T>& pv = t.value(pred_id);
    Tensor<T>& gp = t.grad(pred_id);
    for (int b = 0; b < B; ++b) {
      const double w = static_cast<double>(g) /
                       (static_cast<double>(B) * masks[static_cast<std::size_t>(b)].popcount() * static_cast<double>(plane));
      for (int k = 0; k < K; ++k) {
        if (!masks[static_cast<std::size_t>(b)].bits[static_cast<std::size_t>(k)]) continue;
        const T* p = pv.data() + (static_cast<std::size_t>(b) * K + k) * plane;
        const T* q = gt.data() + (static_cast<std::size_t>(b) * K + k) * plane;
        T* o = gp.data() + (static_cast<std::size_t>(b) * K + k) * plane;
        for (std::int64_t i = 0; i < plane; ++i)
          o[i] += static_cast<T>(2.0 * w * (static_cast<double>(p[i]) - static_cast<double>(q[i])));
      }
    }
  };
  return tape.emit(std::move(y), {pred_id}, std::move(back));
}

// Sum of the partial MSE over every supervised stack (pre-update,
// post-update, and each decoder resolution; all stages when stacked).
template <typename T>
int total_loss_op(Tape<T>& tape, const PosePrediction& pred, const Tensor<T>& gt,
                  const std::vector<AnnotationMask>& masks) {
  std::vector<int> losses;
  losses.reserve(pred.stacks.size());
  for (int stack : pred.stacks) losses.push_back(partial_mse_op(tape, stack, gt, masks));
  return sum_scalars_op(tape, losses);
}

}  // namespace repose
