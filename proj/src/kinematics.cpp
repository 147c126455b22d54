#include "repose/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace repose {

std::vector<int> SkeletonGraph::neighbors(int k) const {
  if (k < 0 || k >= keypoint_count)
    throw std::invalid_argument("neighbors: keypoint index " + std::to_string(k) + " out of range [0," +
                                std::to_string(keypoint_count) + ")");
  std::vector<int> result;
  for (const auto& [a, b] : edges) {
    if (a == k) result.push_back(b);
    if (b == k) result.push_back(a);
  }
  std::sort(result.begin(), result.end());
  return result;
}

int SkeletonGraph::index_of(const std::string& name) const {
  for (int i = 0; i < keypoint_count; ++i)
    if (names[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

bool SkeletonGraph::has_edge(int a, int b) const {
  if (a > b) std::swap(a, b);
  return std::find(edges.begin(), edges.end(), std::make_pair(a, b)) != edges.end();
}

void SkeletonGraph::validate() const {
  const int K = keypoint_count;
  if (K <= 0) throw std::invalid_argument("skeleton: keypoint count must be positive");
  if (static_cast<int>(names.size()) != K) throw std::invalid_argument("skeleton: name list size != K");
  for (const auto& [a, b] : edges) {
    if (a == b) throw std::invalid_argument("skeleton: self-edge at keypoint " + std::to_string(a));
    if (a < 0 || b < 0 || a >= K || b >= K) throw std::invalid_argument("skeleton: edge index out of range");
  }
  if (static_cast<int>(ordering.size()) != K) throw std::invalid_argument("skeleton: ordering size != K");
  std::vector<bool> seen(static_cast<std::size_t>(K), false);
  for (int k : ordering) {
    if (k < 0 || k >= K || seen[static_cast<std::size_t>(k)])
      throw std::invalid_argument("skeleton: ordering is not a permutation of [0,K)");
    seen[static_cast<std::size_t>(k)] = true;
  }
  for (int k = 0; k < K; ++k)
    if (neighbors(k).empty()) throw std::invalid_argument("skeleton: keypoint " + std::to_string(k) + " has no neighbor");
  // connectivity via BFS from node 0
  std::vector<bool> visited(static_cast<std::size_t>(K), false);
  std::vector<int> queue{0};
  visited[0] = true;
  while (!queue.empty()) {
    int k = queue.back();
    queue.pop_back();
    for (int u : neighbors(k))
      if (!visited[static_cast<std::size_t>(u)]) {
        visited[static_cast<std::size_t>(u)] = true;
        queue.push_back(u);
      }
  }
  if (std::find(visited.begin(), visited.end(), false) != visited.end())
    throw std::invalid_argument("skeleton: graph is not connected");
  if (static_cast<int>(flip_pairs.size()) != K) throw std::invalid_argument("skeleton: flip pair list size != K");
  for (int k = 0; k < K; ++k) {
    int p = flip_pairs[static_cast<std::size_t>(k)];
    if (p < 0 || p >= K || flip_pairs[static_cast<std::size_t>(p)] != k)
      throw std::invalid_argument("skeleton: flip pairing is not an involution at keypoint " + std::to_string(k));
  }
}

namespace {

void add_edge(SkeletonGraph& g, const char* a, const char* b) {
  int ia = g.index_of(a), ib = g.index_of(b);
  if (ia < 0 || ib < 0) throw std::logic_error(std::string("default skeleton edge names unknown: ") + a + "," + b);
  if (ia > ib) std::swap(ia, ib);
  g.edges.emplace_back(ia, ib);
}

void finalize_edges(SkeletonGraph& g) { std::sort(g.edges.begin(), g.edges.end()); }

void pair_up(SkeletonGraph& g, const char* right, const char* left) {
  int r = g.index_of(right), l = g.index_of(left);
  g.flip_pairs[static_cast<std::size_t>(r)] = l;
  g.flip_pairs[static_cast<std::size_t>(l)] = r;
}

void set_ordering(SkeletonGraph& g, const std::vector<std::string>& names) {
  g.ordering.clear();
  for (const auto& n : names) g.ordering.push_back(g.index_of(n));
}

}  // namespace

SkeletonGraph default_skeleton(int keypoint_count) {
  if (keypoint_count != 14 && keypoint_count != 16)
    throw std::invalid_argument("default_skeleton: K must be 14 or 16, got " + std::to_string(keypoint_count));

  SkeletonGraph g;
  g.keypoint_count = keypoint_count;
  if (keypoint_count == 14) {
    // LSP index convention
    g.names = {"right_ankle", "right_knee",  "right_hip",      "left_hip",      "left_knee",  "left_ankle",
               "right_wrist", "right_elbow", "right_shoulder", "left_shoulder", "left_elbow", "left_wrist",
               "neck",        "head_top"};
  } else {
    // MPII index convention
    g.names = {"right_ankle",    "right_knee",  "right_hip",   "left_hip",       "left_knee",
               "left_ankle",     "pelvis",      "thorax",      "neck",           "head_top",
               "right_wrist",    "right_elbow", "right_shoulder", "left_shoulder", "left_elbow",
               "left_wrist"};
  }

  g.flip_pairs.assign(static_cast<std::size_t>(keypoint_count), 0);
  for (int k = 0; k < keypoint_count; ++k) g.flip_pairs[static_cast<std::size_t>(k)] = k;
  pair_up(g, "right_ankle", "left_ankle");
  pair_up(g, "right_knee", "left_knee");
  pair_up(g, "right_hip", "left_hip");
  pair_up(g, "right_wrist", "left_wrist");
  pair_up(g, "right_elbow", "left_elbow");
  pair_up(g, "right_shoulder", "left_shoulder");

  // Limb chains plus cross and trunk edges; connected and non-tree.
  add_edge(g, "right_hip", "right_knee");
  add_edge(g, "right_knee", "right_ankle");
  add_edge(g, "left_hip", "left_knee");
  add_edge(g, "left_knee", "left_ankle");
  add_edge(g, "right_shoulder", "right_elbow");
  add_edge(g, "right_elbow", "right_wrist");
  add_edge(g, "left_shoulder", "left_elbow");
  add_edge(g, "left_elbow", "left_wrist");
  add_edge(g, "right_hip", "left_hip");
  add_edge(g, "right_shoulder", "left_shoulder");
  add_edge(g, "neck", "right_shoulder");
  add_edge(g, "neck", "left_shoulder");
  add_edge(g, "neck", "head_top");
  add_edge(g, "right_hip", "right_shoulder");
  add_edge(g, "left_hip", "left_shoulder");

  if (keypoint_count == 14) {
    set_ordering(g, {"right_hip", "left_hip", "right_shoulder", "left_shoulder", "right_knee", "left_knee",
                     "right_elbow", "left_elbow", "right_ankle", "left_ankle", "right_wrist", "left_wrist",
                     "neck", "head_top"});
  } else {
    add_edge(g, "pelvis", "right_hip");
    add_edge(g, "pelvis", "left_hip");
    add_edge(g, "thorax", "right_shoulder");
    add_edge(g, "thorax", "left_shoulder");
    add_edge(g, "pelvis", "thorax");
    add_edge(g, "thorax", "neck");
    set_ordering(g, {"pelvis", "right_hip", "left_hip", "thorax", "right_shoulder", "left_shoulder",
                     "right_knee", "left_knee", "right_elbow", "left_elbow", "right_ankle", "left_ankle",
                     "right_wrist", "left_wrist", "neck", "head_top"});
  }
  finalize_edges(g);
  g.validate();
  return g;
}

UpdateSchedule build_schedule(const SkeletonGraph& graph) {
  graph.validate();
  UpdateSchedule schedule;
  const int K = graph.keypoint_count;
  schedule.steps.reserve(static_cast<std::size_t>(2 * K));
  int slot = 0;
  for (int i = 0; i < K; ++i) schedule.steps.push_back({graph.ordering[static_cast<std::size_t>(i)], UpdatePass::forward, slot++});
  for (int i = K - 1; i >= 0; --i) schedule.steps.push_back({graph.ordering[static_cast<std::size_t>(i)], UpdatePass::reverse, slot++});
  return schedule;
}

double collision_probability(long grid_side, long keypoint_count) {
  if (grid_side < 1) throw std::invalid_argument("collision_probability: grid side must be >= 1");
  if (keypoint_count < 1) throw std::invalid_argument("collision_probability: keypoint count must be >= 1");
  const long cells = grid_side * grid_side;
  if (keypoint_count > cells) return 1.0;  // pigeonhole
  if (keypoint_count == 1) return 0.0;
  double log_no_collision = 0.0;
  for (long i = 0; i < keypoint_count; ++i)
    log_no_collision += std::log(static_cast<double>(cells - i)) - std::log(static_cast<double>(cells));
  return 1.0 - std::exp(log_no_collision);
}

SkeletonGraph load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_skeleton: cannot open " + path);
  nlohmann::json j;
  in >> j;
  SkeletonGraph g;
  g.names = j.at("keypoints").get<std::vector<std::string>>();
  g.keypoint_count = static_cast<int>(g.names.size());
  for (const auto& e : j.at("edges")) {
    int a = g.index_of(e.at(0).get<std::string>());
    int b = g.index_of(e.at(1).get<std::string>());
    if (a < 0 || b < 0) throw std::runtime_error("load_skeleton: edge references unknown keypoint in " + path);
    if (a > b) std::swap(a, b);
    g.edges.emplace_back(a, b);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.ordering.clear();
  for (const auto& n : j.at("ordering")) {
    int k = g.index_of(n.get<std::string>());
    if (k < 0) throw std::runtime_error("load_skeleton: ordering references unknown keypoint in " + path);
    g.ordering.push_back(k);
  }
  g.flip_pairs.assign(static_cast<std::size_t>(g.keypoint_count), 0);
  for (int k = 0; k < g.keypoint_count; ++k) g.flip_pairs[static_cast<std::size_t>(k)] = k;
  for (const auto& p : j.at("pairs")) {
    int r = g.index_of(p.at(0).get<std::string>());
    int l = g.index_of(p.at(1).get<std::string>());
    if (r < 0 || l < 0) throw std::runtime_error("load_skeleton: pair references unknown keypoint in " + path);
    g.flip_pairs[static_cast<std::size_t>(r)] = l;
    g.flip_pairs[static_cast<std::size_t>(l)] = r;
  }
  g.validate();
  return g;
}

void save_skeleton(const SkeletonGraph& graph, const std::string& path) {
  nlohmann::json j;
  j["keypoints"] = graph.names;
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges)
    edges.push_back({graph.names[static_cast<std::size_t>(a)], graph.names[static_cast<std::size_t>(b)]});
  auto& ordering = j["ordering"] = nlohmann::json::array();
  for (int k : graph.ordering) ordering.push_back(graph.names[static_cast<std::size_t>(k)]);
  auto& pairs = j["pairs"] = nlohmann::json::array();
  for (int k = 0; k < graph.keypoint_count; ++k) {
    int p = graph.flip_pairs[static_cast<std::size_t>(k)];
    if (p > k) pairs.push_back({graph.names[static_cast<std::size_t>(k)], graph.names[static_cast<std::size_t>(p)]});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_skeleton: cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace repose
