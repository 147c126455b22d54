#pragma once

#include <string>
#include <vector>

#include "repose/data.hpp"
#include "repose/tensor.hpp"

namespace repose {

// Binary PPM (P6) / PGM (P5); the lossless raster formats used for dataset
// images, heatmap dumps and pose overlays.
Image read_ppm(const std::string& path);
void write_ppm(const Image& image, const std::string& path);

// 8-bit grayscale export of a rank-2 heatmap: value x 255, clamped to [0,255].
void write_pgm_heatmap(const Tensor<float>& grid, const std::string& path);

Tensor<float> image_to_tensor(const Image& image);           // (3, h, w) in [0, 1]
Image tensor_to_image(const Tensor<float>& chw);             // clamps to [0, 1]

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Anti-aliased thick line; `dash` > 0 draws dashes of that length.
void draw_segment(Image& image, double x0, double y0, double x1, double y1, Color color, double radius,
                  double dash = 0.0);
void draw_disk(Image& image, double cx, double cy, double radius, Color color);

// Skeleton overlay: limbs uniquely color coded, solid for right-side parts
// and dashed for left-side parts.
void draw_pose_overlay(Image& image, const std::vector<Keypoint2D>& keypoints, const SkeletonGraph& skeleton);

}  // namespace repose
