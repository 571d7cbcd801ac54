#include "lapkit/tree_decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lapkit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Maximum arborescence rooted at node 0 over the dense score matrix
// sc(h, d) for the edge h -> d; kNegInf marks a forbidden edge. Returns
// per-node parents (parent[0] = -1). Classic Chu-Liu/Edmonds: pick best
// incoming edges, contract one cycle, recurse, expand.
std::vector<int> max_arborescence(const Eigen::MatrixXd& sc) {
  const int m = static_cast<int>(sc.rows());
  std::vector<int> pred(m, -1);
  for (int d = 1; d < m; ++d) {
    int best = -1;
    for (int h = 0; h < m; ++h) {
      if (h == d || sc(h, d) == kNegInf) continue;
      if (best == -1 || sc(h, d) > sc(best, d)) best = h;
    }
    if (best == -1) throw std::invalid_argument("node without incoming arcs");
    pred[d] = best;
  }

  // Chase predecessor chains to find a cycle, if any.
  std::vector<int> state(m, 0);  // 0 new, 1 on current chain, 2 settled
  state[0] = 2;
  std::vector<int> cycle;
  for (int s = 1; s < m && cycle.empty(); ++s) {
    if (state[s] != 0) continue;
    std::vector<int> chain;
    int u = s;
    while (state[u] == 0) {
      state[u] = 1;
      chain.push_back(u);
      u = pred[u];
    }
    if (state[u] == 1)
      cycle.assign(std::find(chain.begin(), chain.end(), u), chain.end());
    for (int v : chain) state[v] = 2;
  }
  if (cycle.empty()) return pred;

  std::vector<char> in_cycle(m, 0);
  for (int v : cycle) in_cycle[v] = 1;
  std::vector<int> to_new(m, -1), to_old;
  for (int v = 0; v < m; ++v)
    if (!in_cycle[v]) {
      to_new[v] = static_cast<int>(to_old.size());
      to_old.push_back(v);
    }
  const int c = static_cast<int>(to_old.size());  // supernode index

  Eigen::MatrixXd sub(c + 1, c + 1);
  sub.setConstant(kNegInf);
  std::vector<int> enter_at(m, -1);  // outside head -> cycle entry node
  std::vector<int> leave_from(m, -1);  // outside dependent -> cycle head
  for (int h = 0; h < m; ++h) {
    if (in_cycle[h]) continue;
    for (int d = 0; d < m; ++d) {
      if (d == h || d == 0) continue;
      if (!in_cycle[d]) {
        sub(to_new[h], to_new[d]) = sc(h, d);
        continue;
      }
      // Entering the cycle at d displaces d's cycle edge.
      if (sc(h, d) == kNegInf) continue;
      const double gain = sc(h, d) - sc(pred[d], d);
      if (enter_at[h] == -1 || gain > sub(to_new[h], c)) {
        sub(to_new[h], c) = gain;
        enter_at[h] = d;
      }
    }
  }
  for (int d = 0; d < m; ++d) {
    if (in_cycle[d] || d == 0) continue;
    for (int h : cycle) {
      if (sc(h, d) == kNegInf) continue;
      if (leave_from[d] == -1 || sc(h, d) > sub(c, to_new[d])) {
        sub(c, to_new[d]) = sc(h, d);
        leave_from[d] = h;
      }
    }
  }

  const std::vector<int> sub_pred = max_arborescence(sub);

  std::vector<int> parent(m, -1);
  for (int v = 0; v < m; ++v)
    if (in_cycle[v]) parent[v] = pred[v];
  for (int d = 0; d < m; ++d) {
    if (in_cycle[d] || d == 0) continue;
    const int p = sub_pred[to_new[d]];
    parent[d] = p == c ? leave_from[d] : to_old[p];
  }
  const int cycle_head = to_old[sub_pred[c]];  // outside node entering cycle
  parent[enter_at[cycle_head]] = cycle_head;
  return parent;
}

}  // namespace

std::vector<int> greedy_heads(const Eigen::MatrixXd& arc_scores) {
  const int n = static_cast<int>(arc_scores.rows());
  if (n < 1 || arc_scores.cols() != n + 1)
    throw std::invalid_argument("arc scores must be n x (n+1)");
  std::vector<int> heads(n);
  for (int i = 0; i < n; ++i) {
    int best = -1;
    for (int j = 0; j <= n; ++j) {
      if (j == i + 1) continue;
      if (best == -1 || arc_scores(i, j) > arc_scores(i, best)) best = j;
    }
    heads[i] = best;
  }
  return heads;
}

bool is_single_root_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (heads[i] < 0 || heads[i] > n || heads[i] == i + 1) return false;
    if (heads[i] == 0) ++roots;
  }
  if (roots != 1) return false;
  // Every token must reach the root without revisiting a node.
  std::vector<int> reached(n + 1, 0);  // 0 = unknown, 1 = reaches root
  reached[0] = 1;
  for (int i = 1; i <= n; ++i) {
    std::vector<int> path;
    int u = i;
    while (!reached[u]) {
      path.push_back(u);
      u = heads[u - 1];
      if (std::find(path.begin(), path.end(), u) != path.end()) return false;
    }
    for (int v : path) reached[v] = 1;
  }
  return true;
}

std::vector<int> decode_heads(const Eigen::MatrixXd& arc_scores) {
  std::vector<int> heads = greedy_heads(arc_scores);
  if (is_single_root_tree(heads)) return heads;

  const int n = static_cast<int>(arc_scores.rows());
  // Node d's incoming edge from h scores arc_scores(d-1, h).
  Eigen::MatrixXd sc(n + 1, n + 1);
  sc.setConstant(kNegInf);
  for (int d = 1; d <= n; ++d)
    for (int h = 0; h <= n; ++h)
      if (h != d) sc(h, d) = arc_scores(d - 1, h);

  std::vector<int> best;
  double best_score = kNegInf;
  for (int r = 1; r <= n; ++r) {  // force the root's single attachment
    Eigen::MatrixXd forced = sc;
    for (int d = 1; d <= n; ++d)
      if (d != r) forced(0, d) = kNegInf;
    std::vector<int> parent;
    try {
      parent = max_arborescence(forced);
    } catch (const std::invalid_argument&) {
      continue;  // n = 1 style degeneracies cannot occur; defensive
    }
    std::vector<int> cand(n);
    for (int d = 1; d <= n; ++d) cand[d - 1] = parent[d];
    const double s = tree_score(arc_scores, cand);
    if (s > best_score) {
      best_score = s;
      best = std::move(cand);
    }
  }
  return best;
}

double tree_score(const Eigen::MatrixXd& arc_scores,
                  const std::vector<int>& heads) {
  double s = 0.0;
  for (std::size_t i = 0; i < heads.size(); ++i)
    s += arc_scores(static_cast<Eigen::Index>(i), heads[i]);
  return s;
}

}  // namespace lapkit
