#include "repose/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace repose {

double reference_length(const PoseExample& example, const PckSpec& spec, const SkeletonGraph& skeleton) {
  spec.validate();
  if (spec.reference == PckSpec::Reference::torso_diameter) {
    const int rs = skeleton.index_of("right_shoulder");
    const int lh = skeleton.index_of("left_hip");
    if (rs < 0 || lh < 0) return 0.0;
    const auto& a = example.keypoints[static_cast<std::size_t>(rs)];
    const auto& b = example.keypoints[static_cast<std::size_t>(lh)];
    if (!a.annotated || !b.annotated) return 0.0;
    return std::hypot(a.x - b.x, a.y - b.y);
  }
  if (example.head_box) return example.head_box->diagonal();
  const int ht = skeleton.index_of("head_top");
  const int nk = skeleton.index_of("neck");
  if (ht < 0 || nk < 0) return 0.0;
  const auto& a = example.keypoints[static_cast<std::size_t>(ht)];
  const auto& b = example.keypoints[static_cast<std::size_t>(nk)];
  if (!a.annotated || !b.annotated) return 0.0;
  return std::hypot(a.x - b.x, a.y - b.y);
}

int pck_group_of(const std::string& name) {
  const auto& groups = pck_groups();
  // "head_top" belongs to the head group; "pelvis"/"thorax"/"neck" have no
  // group column but still count toward the mean.
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (name.find(groups[g]) != std::string::npos && name != "pelvis" && name != "thorax") return static_cast<int>(g);
  return -1;
}

PckResult pck(const std::vector<std::vector<Keypoint2D>>& decoded, const std::vector<PoseExample>& ground_truth,
              const PckSpec& spec, const SkeletonGraph& skeleton) {
  spec.validate();
  if (decoded.size() != ground_truth.size())
    throw std::invalid_argument("pck: decoded and ground truth example counts differ");
  PckResult res;
  res.group_accuracy.assign(pck_groups().size(), 0.0);
  res.group_total.assign(pck_groups().size(), 0);
  std::vector<long> group_correct(pck_groups().size(), 0);

  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const PoseExample& gt = ground_truth[i];
    const double ref = reference_length(gt, spec, skeleton);
    if (!(ref > 0.0)) {
      ++res.excluded_examples;
      continue;
    }
    const double threshold = spec.alpha * ref;
    if (decoded[i].size() != gt.keypoints.size())
      throw std::invalid_argument("pck: keypoint count mismatch at example " + std::to_string(i));
    for (std::size_t k = 0; k < gt.keypoints.size(); ++k) {
      if (!gt.keypoints[k].annotated) continue;
      const auto& d = decoded[i][k];
      const bool correct = d.annotated && std::hypot(d.x - gt.keypoints[k].x, d.y - gt.keypoints[k].y) <= threshold;
      ++res.evaluated;
      if (correct) ++res.correct;
      const int g = pck_group_of(skeleton.names[k]);
      if (g >= 0) {
        ++res.group_total[static_cast<std::size_t>(g)];
        if (correct) ++group_correct[static_cast<std::size_t>(g)];
      }
    }
  }
  for (std::size_t g = 0; g < pck_groups().size(); ++g)
    res.group_accuracy[g] = res.group_total[g] > 0 ? static_cast<double>(group_correct[g]) / res.group_total[g] : 0.0;
  res.mean = res.evaluated > 0 ? static_cast<double>(res.correct) / res.evaluated : 0.0;
  return res;
}

std::string PckResult::delimited_header() {
  std::ostringstream os;
  os << "label";
  for (const auto& g : pck_groups()) os << '\t' << g;
  os << "\tmean";
  return os.str();
}

std::string PckResult::delimited(const std::string& row_label) const {
  std::ostringstream os;
  os << row_label;
  os << std::fixed << std::setprecision(4);
  for (double a : group_accuracy) os << '\t' << a;
  os << '\t' << mean;
  return os.str();
}

std::string PckResult::table(const std::string& row_label) const {
  std::ostringstream os;
  os << std::left << std::setw(16) << "";
  for (const auto& g : pck_groups()) os << std::setw(10) << g;
  os << std::setw(10) << "mean" << '\n';
  os << std::left << std::setw(16) << row_label << std::fixed << std::setprecision(2);
  for (double a : group_accuracy) os << std::setw(10) << a * 100.0;
  os << std::setw(10) << mean * 100.0 << '\n';
  os << "evaluated keypoints: " << evaluated << ", excluded examples: " << excluded_examples << '\n';
  return os.str();
}

}  // namespace repose
