#pragma once

#include <string>
#include <vector>

#include "repose/data.hpp"
#include "repose/kinematics.hpp"

namespace repose {

struct PckSpec {
  double alpha = 0.2;
  enum class Reference { torso_diameter, head_length } reference = Reference::torso_diameter;

  void validate() const {
    if (!(alpha > 0)) throw std::invalid_argument("pck spec: alpha must be positive");
  }
};

inline const char* to_string(PckSpec::Reference r) {
  return r == PckSpec::Reference::torso_diameter ? "torso_diameter" : "head_length";
}

// Per-example threshold reference in pixels. Torso diameter is the
// right_shoulder to left_hip distance; head length is the head box diagonal
// when present, otherwise the head_top to neck distance. Returns 0 when the
// defining keypoints are missing or degenerate (caller excludes the example
// and counts it).
double reference_length(const PoseExample& example, const PckSpec& spec, const SkeletonGraph& skeleton);

// Left/right pooled report groups mirroring the standard table layout.
inline const std::vector<std::string>& pck_groups() {
  static const std::vector<std::string> groups{"head", "shoulder", "elbow", "wrist", "hip", "knee", "ankle"};
  return groups;
}

// Group index for a keypoint name, -1 for ungrouped keypoints (neck, pelvis,
// thorax), which still count toward the mean.
int pck_group_of(const std::string& keypoint_name);

struct PckResult {
  std::vector<double> group_accuracy;  // aligned with pck_groups()
  std::vector<long> group_total;
  double mean = 0.0;                   // over all annotated evaluated keypoints
  long correct = 0;
  long evaluated = 0;
  long excluded_examples = 0;

  std::string table(const std::string& row_label) const;      // human-readable
  std::string delimited(const std::string& row_label) const;  // 8 columns + label, tab separated
  static std::string delimited_header();
};

// A keypoint is correct iff its Euclidean error <= alpha * reference length;
// decoded and ground-truth keypoints must share the original image frame.
// Unannotated ground-truth keypoints are skipped; undetected decodes count
// as incorrect.
PckResult pck(const std::vector<std::vector<Keypoint2D>>& decoded, const std::vector<PoseExample>& ground_truth,
              const PckSpec& spec, const SkeletonGraph& skeleton);

}  // namespace repose
