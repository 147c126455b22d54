#pragma once

#include <string>
#include <utility>
#include <vector>

namespace repose {

struct KeypointId {
  int index = -1;
  std::string name;
};

// Undirected keypoint connectivity plus the update ordering used by the
// kinematic feature-update module. Immutable after construction.
struct SkeletonGraph {
  int keypoint_count = 0;
  std::vector<std::string> names;           // canonical index -> name
  std::vector<std::pair<int, int>> edges;   // stored with first < second, sorted
  std::vector<int> ordering;                // permutation of [0, K)
  std::vector<int> flip_pairs;              // left/right counterpart, self for center keypoints

  // Neighbours of k, ascending canonical index. Throws on out-of-range k.
  std::vector<int> neighbors(int k) const;

  int index_of(const std::string& name) const;  // -1 if absent
  bool has_edge(int a, int b) const;

  // Throws std::invalid_argument if any structural invariant is violated:
  // self-edges, disconnected graph, ordering not a permutation, isolated
  // node, or pairing that is not an involution.
  void validate() const;
};

enum class UpdatePass { forward, reverse };

struct UpdateStep {
  int keypoint = -1;
  UpdatePass pass = UpdatePass::forward;
  int slot = -1;  // parameter-slot id, unique across the schedule
};

struct UpdateSchedule {
  std::vector<UpdateStep> steps;  // length 2K
};

// Built-in skeletons: K=14 (LSP-style) or K=16 (MPII-style, adds pelvis and
// thorax). Ordering is hips, shoulders, knees, elbows, ankles, wrists, neck,
// head with each right keypoint immediately before its left counterpart.
SkeletonGraph default_skeleton(int keypoint_count);

// Forward pass over `ordering`, then a reverse pass over the exact reversed
// ordering; every step gets a fresh parameter slot.
UpdateSchedule build_schedule(const SkeletonGraph& graph);

// Probability that at least two of K i.i.d. uniformly placed keypoints land
// on the same pixel of an n x n grid: 1 - P(n^2, K) / n^{2K}, evaluated in
// log space. Returns exactly 1 when K > n^2 and exactly 0 when K <= 1.
double collision_probability(long grid_side, long keypoint_count);

// JSON skeleton config (keypoint names, pair map, edge list, ordering), so
// ablations can swap graphs without recompiling.
SkeletonGraph load_skeleton(const std::string& path);
void save_skeleton(const SkeletonGraph& graph, const std::string& path);

}  // namespace repose
