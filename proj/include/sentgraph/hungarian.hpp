#ifndef SENTGRAPH_HUNGARIAN_HPP
#define SENTGRAPH_HUNGARIAN_HPP

#include <vector>

namespace sentgraph {

struct Matching {
  std::vector<int> assignment;  // row index → column index, injective
  double total_cost = 0.0;
};

// Minimum-cost injective assignment of rows to columns (Jonker–Volgenant
// shortest augmenting path, O(n²m)). Requires n ≤ m and finite costs; ties
// are broken deterministically in favour of the lowest column index.
Matching hungarian(const std::vector<std::vector<double>>& cost);

}  // namespace sentgraph

#endif  // SENTGRAPH_HUNGARIAN_HPP
