#pragma once

#include <cmath>
#include <stdexcept>

#include "repose/tape.hpp"
#include "repose/tensor.hpp"

namespace repose {

struct Keypoint2D {
  double x = 0.0;
  double y = 0.0;
  bool annotated = false;
};

template <typename T>
struct Heatmap {
  int keypoint = -1;
  Tensor<T> grid;  // dims {n, n}
};

struct PeakDecode {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
  bool detected = false;
};

// Unnormalized Gaussian centered at p; peak value is exp(0) = 1 when p is
// pixel aligned. The Gaussian is untruncated so integer shifts of p shift
// the grid values exactly. Unannotated keypoints synthesize an all-zero map.
template <typename T>
Tensor<T> synth_heatmap(const Keypoint2D& p, int side, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("synth_heatmap: sigma must be positive");
  if (side < 1) throw std::invalid_argument("synth_heatmap: side must be >= 1");
  Tensor<T> grid({side, side});
  if (!p.annotated) return grid;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < side; ++y) {
    const double dy = static_cast<double>(y) - p.y;
    T* row = grid.data() + static_cast<std::size_t>(y) * side;
    for (int x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) - p.x;
      row[x] = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv));
    }
  }
  return grid;
}

// Argmax decode; ties broken by smallest row-major index. An all-zero map
// decodes as undetected with confidence 0.
template <typename T>
PeakDecode decode_peak(const Tensor<T>& grid) {
  if (grid.rank() != 2) throw std::invalid_argument("decode_peak: expected rank-2 grid, got " + grid.shape_string());
  const int h = grid.dim(0), w = grid.dim(1);
  PeakDecode out;
  T best = T(0);
  std::int64_t best_idx = -1;
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grid[i])))
      throw std::invalid_argument("decode_peak: non-finite heatmap value");
    if (grid[i] > best) {
      best = grid[i];
      best_idx = i;
    }
  }
  if (best_idx < 0) return out;  // all zero (or negative): undetected
  out.x = static_cast<double>(best_idx % w);
  out.y = static_cast<double>(best_idx / w);
  out.confidence = static_cast<double>(best);
  out.detected = true;
  (void)h;
  return out;
}

// Channel c of example b in a (B, K, H, W) stack, viewed as a rank-2 grid.
template <typename T>
Tensor<T> extract_channel(const Tensor<T>& stack, int b, int c) {
  if (stack.rank() != 4) throw std::invalid_argument("extract_channel: expected rank-4 stack");
  Tensor<T> grid({stack.h(), stack.w()});
  const T* src = stack.data() + (static_cast<std::size_t>(b) * stack.c() + c) * stack.h() * stack.w();
  std::copy(src, src + grid.size(), grid.data());
  return grid;
}

// Resolution conversion for a single rank-2 heatmap; bilinear, preserves
// non-negativity, identity when sizes already match.
template <typename T>
Tensor<T> scale_to_output(const Tensor<T>& grid, int out_side) {
  if (grid.rank() != 2) throw std::invalid_argument("scale_to_output: expected rank-2 grid, got " + grid.shape_string());
  if (grid.dim(0) == out_side && grid.dim(1) == out_side) return grid;
  Tensor<T> as4({1, 1, grid.dim(0), grid.dim(1)});
  std::copy(grid.data(), grid.data() + grid.size(), as4.data());
  Tensor<T> resized = bilinear_resize(as4, out_side, out_side);
  Tensor<T> out({out_side, out_side});
  std::copy(resized.data(), resized.data() + resized.size(), out.data());
  return out;
}

// Ground-truth stack (B, K, side, side) for a batch of keypoint lists.
// Keypoints flagged unannotated produce zero channels.
template <typename T>
Tensor<T> synth_heatmap_stack(const std::vector<std::vector<Keypoint2D>>& batch, int side, double sigma) {
  const int B = static_cast<int>(batch.size());
  const int K = B > 0 ? static_cast<int>(batch.front().size()) : 0;
  Tensor<T> stack({B, K, side, side});
  for (int b = 0; b < B; ++b) {
    if (static_cast<int>(batch[static_cast<std::size_t>(b)].size()) != K)
      throw std::invalid_argument("synth_heatmap_stack: inconsistent keypoint counts in batch");
    for (int k = 0; k < K; ++k) {
      Tensor<T> grid = synth_heatmap<T>(batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)], side, sigma);
      std::copy(grid.data(), grid.data() + grid.size(),
                stack.data() + (static_cast<std::size_t>(b) * K + k) * side * side);
    }
  }
  return stack;
}

}  // namespace repose
