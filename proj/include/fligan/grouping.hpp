#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fligan/errors.hpp"
#include "fligan/tabular.hpp"

namespace fligan {

inline constexpr int kNoise = -1;

/// DBSCAN on the real line.
///
/// Points are visited in ascending value order (ties by input position), so
/// cluster ids follow first-seen order and the result is deterministic.
/// Returns one cluster id per input point, or kNoise.
inline std::vector<int> dbscan_1d(const std::vector<double>& points, double eps, int min_pts) {
  require(eps > 0.0, "dbscan_1d: eps must be positive");
  require(min_pts >= 1, "dbscan_1d: min_pts must be >= 1");
  const std::size_t n = points.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });

  auto neighbours = [&](std::size_t p) {
    std::vector<std::size_t> out;
    for (std::size_t q : order)
      if (std::abs(points[q] - points[p]) <= eps) out.push_back(q);
    return out;
  };

  constexpr int kUnvisited = -2;
  std::vector<int> label(n, kUnvisited);
  int next_cluster = 0;
  for (std::size_t p : order) {
    if (label[p] != kUnvisited) continue;
    auto seeds = neighbours(p);
    if (static_cast<int>(seeds.size()) < min_pts) {
      label[p] = kNoise;
      continue;
    }
    const int cluster = next_cluster++;
    label[p] = cluster;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = cluster;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      auto more = neighbours(q);
      if (static_cast<int>(more.size()) >= min_pts) queue.insert(queue.end(), more.begin(), more.end());
    }
  }
  return label;
}

struct NodeGroup {
  std::string label;
  std::vector<int> member_node_ids;
  std::size_t volume = 0;
  bool operator==(const NodeGroup&) const = default;
};

struct GroupingParams {
  double eps = 0.5;
  int min_pts = 1;
};

/// Clusters the nodes holding `label` by log(1 + count) and returns the
/// groups richest first. Nodes DBSCAN leaves as noise (only possible with
/// min_pts > 1) become singleton groups.
inline std::vector<NodeGroup> group_nodes(const std::string& label,
                                          const std::vector<ClassDistribution>& dists,
                                          GroupingParams params = {}) {
  std::vector<int> nodes;
  std::vector<std::size_t> counts;
  std::vector<double> points;
  for (const auto& d : dists) {
    auto c = d.count(label);
    if (c == 0) continue;
    nodes.push_back(d.node_id);
    counts.push_back(c);
    points.push_back(std::log1p(static_cast<double>(c)));
  }
  auto assignment = dbscan_1d(points, params.eps, params.min_pts);
  int next_id = 0;
  for (int a : assignment) next_id = std::max(next_id, a + 1);
  for (auto& a : assignment)
    if (a == kNoise) a = next_id++;

  std::vector<NodeGroup> groups(static_cast<std::size_t>(next_id));
  for (auto& g : groups) g.label = label;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& g = groups[static_cast<std::size_t>(assignment[i])];
    g.member_node_ids.push_back(nodes[i]);
    g.volume += counts[i];
  }
  for (auto& g : groups) std::sort(g.member_node_ids.begin(), g.member_node_ids.end());
  std::stable_sort(groups.begin(), groups.end(),
                   [](const NodeGroup& a, const NodeGroup& b) { return a.volume > b.volume; });
  return groups;
}

struct TrainingSchedule {
  std::size_t group_index = 0;
  int rounds = 1;
  int epochs = 1;
  bool operator==(const TrainingSchedule&) const = default;
};

/// rounds = ceil(r_init * alpha_r^g), epochs = ceil(e_init * alpha_e^g).
inline TrainingSchedule schedule(int r_init, int e_init, double alpha_r, double alpha_e,
                                 std::size_t group_index) {
  require(r_init >= 1 && e_init >= 1, "schedule: initial rounds/epochs must be positive");
  require(alpha_r > 0.0 && alpha_r <= 1.0 && alpha_e > 0.0 && alpha_e <= 1.0,
          "schedule: decay rates must lie in (0, 1]");
  auto decayed = [&](int init, double rate) {
    double v = static_cast<double>(init) * std::pow(rate, static_cast<double>(group_index));
    // absorb representation error such as 3.0000000000000004
    return std::max(1, static_cast<int>(std::ceil(v - 1e-9)));
  };
  return {group_index, decayed(r_init, alpha_r), decayed(e_init, alpha_e)};
}

}  // namespace fligan
