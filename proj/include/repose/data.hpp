#pragma once

#include <optional>
#include <string>
#include <vector>

#include "repose/heatmap.hpp"
#include "repose/kinematics.hpp"
#include "repose/lossmetrics.hpp"
#include "repose/rng.hpp"
#include "repose/tensor.hpp"

namespace repose {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  bool empty() const { return rgb.empty(); }
  static Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

struct HeadBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double diagonal() const;
};

struct PoseExample {
  std::string image_path;  // "-" when the image lives inline only
  Image image;
  std::vector<Keypoint2D> keypoints;  // original image coordinates
  double center_x = 0, center_y = 0;
  double scale = 0;  // person-height proxy in pixels (crop box side)
  std::optional<HeadBox> head_box;
  std::string source;

  AnnotationMask mask() const {
    AnnotationMask m;
    m.bits.reserve(keypoints.size());
    for (const auto& kp : keypoints) m.bits.push_back(kp.annotated ? 1 : 0);
    return m;
  }
};

// 2x3 affine map [a b tx; c d ty] acting on column vectors (x, y).
struct AffineTransform {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  std::pair<double, double> apply(double x, double y) const { return {a * x + b * y + tx, c * x + d * y + ty}; }
  Keypoint2D apply(const Keypoint2D& p) const {
    auto [x, y] = apply(p.x, p.y);
    return {x, y, p.annotated};
  }
  AffineTransform inverse() const;
  static AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner);  // outer(inner(p))
};

struct AugmentConfig {
  double scale_min = 0.7, scale_max = 1.3;
  double rotation_max_deg = 60.0;
  double hflip_prob = 0.5;
  double brightness_min = 0.8, brightness_max = 1.2;
  double contrast_min = 0.8, contrast_max = 1.2;
  double channel_jitter = 0.05;  // per-channel additive, in [0,1] units

  void validate() const;
};

enum class AnnotationFormat { native, lsp_style, mpii_style };

struct LoadResult {
  std::vector<PoseExample> examples;
  int dropped = 0;  // records with zero annotated keypoints
};

// Native format: one whitespace-separated text record per example
// (image path, K, center, scale, optional head box, K keypoint triplets);
// documented field-by-field in the README. Images referenced by relative
// path are loaded from the annotation file's directory when present.
LoadResult load_annotations(const std::string& path, AnnotationFormat format, bool load_images = true);
void save_annotations(const std::string& path, const std::vector<PoseExample>& examples);

// Writes images (PPM) plus a native annotation file into a directory.
void save_dataset(const std::string& dir, const std::string& name, std::vector<PoseExample> examples);

struct CropResult {
  Tensor<float> image;  // (3, n, n), values in [0, 1]
  std::vector<Keypoint2D> keypoints;
  AffineTransform to_crop, to_original;
  bool padded = false;
};

// Similarity transform mapping the scale-sized box around the example's
// center onto an n x n crop; out-of-frame regions are zero padded and the
// inverse transform is returned for metric-space decoding.
CropResult crop_normalize(const PoseExample& ex, int out_size);

// Deterministic augmentation pieces (augment() composes them from rng draws).
PoseExample flip_example(const PoseExample& ex, const SkeletonGraph& skeleton);
PoseExample rotate_example(const PoseExample& ex, double degrees);  // about the crop center
PoseExample color_noise_example(const PoseExample& ex, double brightness, double contrast,
                                const std::vector<double>& channel_offsets);

PoseExample augment(const PoseExample& ex, Rng& rng, const AugmentConfig& cfg, const SkeletonGraph& skeleton);

struct SynthConfig {
  int count = 1000;
  int keypoints = 14;
  int canvas = 80;
  double occluded_fraction = 0.15;    // drawn over but still annotated
  double unannotated_fraction = 0.0;  // annotation bit cleared
};

// Stick-figure generator with exact keypoint ground truth: plausible
// joint-angle configurations, bounded limb lengths, anti-aliased limbs with
// distinct per-limb colors on a randomized background. Deterministic in the
// rng seed.
std::vector<PoseExample> synth_dataset(Rng& rng, const SynthConfig& cfg);

// Maps examples into a target keypoint space by name; keypoints absent from
// the source skeleton come out unannotated. `name_map` optionally renames
// source keypoints first (loadable from a JSON config).
std::vector<PoseExample> unify_keypoint_space(const std::vector<PoseExample>& examples,
                                              const SkeletonGraph& from_skeleton, const SkeletonGraph& to_skeleton,
                                              const std::vector<std::pair<std::string, std::string>>& name_map = {});

// Training batch at output resolution: crops + rendered ground truth +
// masks (with out-of-frame keypoints cleared) + inverse transforms.
struct Batch {
  Tensor<float> images;  // (B, 3, n, n)
  Tensor<float> gt;      // (B, K, n, n)
  std::vector<AnnotationMask> masks;
  std::vector<std::vector<Keypoint2D>> crop_keypoints;
  std::vector<AffineTransform> to_original;
};

// Prepares one example: optional augmentation, crop, ground-truth render at
// `input_size`, out-of-frame annotated keypoints masked out. Returns false
// when nothing remains annotated (caller should substitute another example).
bool prepare_example(const PoseExample& ex, int input_size, double sigma, const SkeletonGraph& skeleton,
                     Rng* augment_rng, const AugmentConfig* augment_cfg, Batch& out, int slot);

Batch allocate_batch(int batch_size, int keypoints, int input_size);

}  // namespace repose
