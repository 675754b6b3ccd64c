#pragma once

// Enumerates every pruned subtree of a small tree (each internal node either
// kept or collapsed to a leaf) and reports the minimum of SSE + alpha * leaves.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace oracle {

struct FlatNode {
  bool leaf;
  std::size_t left, right;
  double sse;
};

// All achievable (sse, leaves) pairs for the subtree rooted at i.
inline std::vector<std::pair<double, std::size_t>> subtree_options(const std::vector<FlatNode>& t, std::size_t i) {
  std::vector<std::pair<double, std::size_t>> out{{t[i].sse, 1}};
  if (t[i].leaf) return out;
  const auto l = subtree_options(t, t[i].left);
  const auto r = subtree_options(t, t[i].right);
  for (const auto& a : l)
    for (const auto& b : r) out.push_back({a.first + b.first, a.second + b.second});
  return out;
}

inline double min_cost(const std::vector<FlatNode>& t, double alpha) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [sse, leaves] : subtree_options(t, 0))
    best = std::min(best, sse + alpha * static_cast<double>(leaves));
  return best;
}

}  // namespace oracle
