#pragma once

#include <Eigen/Dense>
#include <vector>

namespace lapkit {

// Heads use 1-based token positions with 0 for the artificial root:
// heads[i] is the head of token i+1. labels hold relation ids.
struct DependencyTree {
  std::vector<int> heads;
  std::vector<int> labels;
};

// Arc scores S are n x (n+1): S(i, j) scores head candidate j for the
// dependent at 1-based position i+1; column 0 is the artificial root.
// Heads vectors use the same convention: heads[i] in [0, n], 0 = root.

// Per-dependent argmax (self-arc excluded), ties to the smaller index.
std::vector<int> greedy_heads(const Eigen::MatrixXd& arc_scores);

// Exactly one root attachment, no self-arcs, no cycles.
bool is_single_root_tree(const std::vector<int>& heads);

// Greedy result when it already forms a single-root tree, otherwise the
// maximum spanning arborescence under the single-root constraint
// (Chu-Liu/Edmonds per candidate root attachment). Total on finite scores.
std::vector<int> decode_heads(const Eigen::MatrixXd& arc_scores);

double tree_score(const Eigen::MatrixXd& arc_scores,
                  const std::vector<int>& heads);

}  // namespace lapkit
