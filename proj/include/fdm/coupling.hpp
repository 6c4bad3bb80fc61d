// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fdm/rng.hpp"
#include "fdm/tensor.hpp"

namespace fdm {

enum class CouplingKind { ot, independent };

inline std::string to_string(CouplingKind k) { return k == CouplingKind::ot ? "ot" : "independent"; }

inline CouplingKind parse_coupling_kind(const std::string& s) {
  if (s == "ot") return CouplingKind::ot;
  if (s == "independent") return CouplingKind::independent;
  throw ConfigError("unknown coupling '" + s + "' (expected ot or independent)");
}

/// Source row i is paired with target row perm[i].
struct CouplingPlan {
  std::vector<std::size_t> perm;
  double cost = 0.0;
};

/// cost(i, j) = ||a_i - b_j||^2, row-major B x B.
inline std::vector<double> sq_euclidean_costs(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = sq_dist(a.row(i), b.row(j));
  return c;
}

/// Total cost of `perm`, summed in row order.
inline double plan_cost(const Tensor& a, const Tensor& b, const std::vector<std::size_t>& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += sq_dist(a.row(i), b.row(perm[i]));
  return s;
}

inline bool is_permutation_of_range(const std::vector<std::size_t>& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

namespace detail {

inline void check_batches(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows())
    throw ConfigError(std::string(what) + ": batch sizes differ (" + std::to_string(a.rows()) + " vs " +
                      std::to_string(b.rows()) + ")");
  if (a.cols() != b.cols()) throw ConfigError(std::string(what) + ": sample widths differ");
}

/// Absolute slack under which two plan costs, or a reduced edge cost and
/// zero, are treated as equal.
inline double tie_tolerance(const std::vector<double>& cost) {
  double m = 0.0;
  for (double c : cost) m = std::max(m, c);
  return 1e-10 * (1.0 + m);
}

/// Shortest augmenting path assignment with dual potentials. On return
/// cost(i,j) - u[i] - v[j] >= 0 with equality on the matched edges.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n,
                                                 std::vector<double>& u, std::vector<double>& v) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  // Column reduction plus two rounds of augmenting row reduction assign
  // most rows cheaply while keeping every assigned row on a minimum of its
  // reduced costs. Remaining rows join one at a time, each growing a
  // Dijkstra tree over reduced costs.
  u.assign(n, 0.0);
  v.assign(n, inf);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j] = std::min(v[j], cost[i * n + j]);
  std::vector<std::size_t> owner(n, none), assigned(n, none), way(n, none), free_cols(n), tree_cols;
  std::vector<std::size_t> pending(n);
  std::iota(pending.begin(), pending.end(), std::size_t{0});
  for (int round = 0; round < 2 && !pending.empty(); ++round) {
    std::size_t current = 0, kept = 0, steps = 0;
    const std::size_t n_pending = pending.size();
    while (current < n_pending) {
      ++steps;
      const std::size_t row = pending[current++];
      const double* c = cost.data() + row * n;
      std::size_t j1 = 0, j2 = none;
      double h1 = c[0] - v[0], h2 = inf;
      for (std::size_t j = 1; j < n; ++j) {
        const double h = c[j] - v[j];
        if (h < h2) {
          if (h >= h1) {
            h2 = h;
            j2 = j;
          } else {
            h2 = h1;
            h1 = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      std::size_t displaced = owner[j1];
      const double lowered = j2 == none ? v[j1] : v[j1] - (h2 - h1);
      const bool lowers = lowered < v[j1];
      if (steps < 4 * n) {
        if (lowers) v[j1] = lowered;
        else if (displaced != none && j2 != none) {
          j1 = j2;
          displaced = owner[j2];
        }
        if (displaced != none) {
          assigned[displaced] = none;
          if (lowers) pending[--current] = displaced;
          else pending[kept++] = displaced;
        }
      } else if (displaced != none) {
        assigned[displaced] = none;
        pending[kept++] = displaced;
      }
      assigned[row] = j1;
      owner[j1] = row;
    }
    pending.resize(kept);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (assigned[i] != none) {
      u[i] = cost[i * n + assigned[i]] - v[assigned[i]];
    } else {
      double best = inf;
      for (std::size_t j = 0; j < n; ++j) best = std::min(best, cost[i * n + j] - v[j]);
      u[i] = best;
    }
  }
  std::vector<double> minv(n);
  tree_cols.reserve(n);
  for (std::size_t i : pending) {
    std::iota(free_cols.begin(), free_cols.end(), std::size_t{0});
    std::size_t n_free = n;
    std::fill(minv.begin(), minv.end(), inf);
    tree_cols.clear();
    std::size_t row = i, from = none, target = none;
    double root_shift = 0.0;
    while (true) {
      const double* c = cost.data() + row * n;
      const double ur = (row == i ? u[i] + root_shift : u[row]);
      double delta = inf;
      std::size_t best = 0;
      for (std::size_t k = 0; k < n_free; ++k) {
        const std::size_t j = free_cols[k];
        const double cur = c[j] - ur - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = from;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          best = k;
        }
      }
      root_shift += delta;
      for (std::size_t j : tree_cols) {
        u[owner[j]] += delta;
        v[j] -= delta;
      }
      for (std::size_t k = 0; k < n_free; ++k) minv[free_cols[k]] -= delta;
      const std::size_t j1 = free_cols[best];
      free_cols[best] = free_cols[--n_free];
      tree_cols.push_back(j1);
      if (owner[j1] == none) {
        target = j1;
        break;
      }
      from = j1;
      row = owner[j1];
    }
    u[i] += root_shift;
    for (std::size_t j = target; j != none;) {
      const std::size_t prev = way[j];
      owner[j] = prev == none ? i : owner[prev];
      j = prev;
    }
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < n; ++j) perm[owner[j]] = j;
  return perm;
}

/// Among all perfect matchings on tight edges (the optimal assignments),
/// moves to the lexicographically smallest one, fixing rows in order.
inline void lexicographic_refine(const std::vector<double>& cost, std::size_t n, const std::vector<double>& u,
                                 const std::vector<double>& v, double tol, std::vector<std::size_t>& perm) {
  auto tight = [&](std::size_t i, std::size_t j) { return cost[i * n + j] - u[i] - v[j] <= tol; };
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) owner[perm[i]] = i;

  std::vector<int> visited(n, -1);
  int stamp = 0;
  // Alternating path from `row` (which has lost its column) to `goal`,
  // using only rows > fixed_row. Rewrites perm/owner along the path.
  auto augment = [&](auto&& self, std::size_t row, std::size_t goal, std::size_t fixed_row,
                     std::size_t banned) -> bool {
    for (std::size_t c = 0; c < n; ++c) {
      if (c == banned || !tight(row, c)) continue;
      if (c == goal) {
        perm[row] = c;
        owner[c] = row;
        return true;
      }
      const std::size_t r2 = owner[c];
      if (r2 <= fixed_row || r2 == row || visited[r2] == stamp) continue;
      visited[r2] = stamp;
      if (self(self, r2, goal, fixed_row, banned)) {
        perm[row] = c;
        owner[c] = row;
        return true;
      }
    }
    return false;
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < perm[i]; ++j) {
      if (!tight(i, j)) continue;
      const std::size_t r = owner[j];
      if (r <= i) continue;  // held by a fixed row
      ++stamp;
      visited[r] = stamp;
      const std::size_t freed = perm[i];
      // r gives j to i and must reach the column i releases.
      if (augment(augment, r, freed, i, j)) {
        perm[i] = j;
        owner[j] = i;
        break;
      }
    }
  }
}

}  // namespace detail

/// Uniformly random pairing.
inline CouplingPlan independent_pairs(const Tensor& a, const Tensor& b, Rng& rng) {
  detail::check_batches(a, b, "independent_pairs");
  CouplingPlan plan{rng.permutation(a.rows()), 0.0};
  plan.cost = plan_cost(a, b, plan.perm);
  return plan;
}

/// Exact minimum squared-Euclidean assignment; ties resolve to the
/// lexicographically smallest permutation.
inline CouplingPlan ot_pairs(const Tensor& a, const Tensor& b, std::size_t max_batch = 512) {
  detail::check_batches(a, b, "ot_pairs");
  const std::size_t n = a.rows();
  if (n > max_batch)
    throw ConfigError("ot_pairs: batch size " + std::to_string(n) + " exceeds maximum " + std::to_string(max_batch));
  if (n == 0) return {};
  const auto cost = sq_euclidean_costs(a, b);
  std::vector<double> u, v;
  auto perm = detail::solve_assignment(cost, n, u, v);
  detail::lexicographic_refine(cost, n, u, v, detail::tie_tolerance(cost), perm);
  return {perm, plan_cost(a, b, perm)};
}

/// Exhaustive search over all B! permutations in lexicographic order.
inline CouplingPlan brute_force_pairs(const Tensor& a, const Tensor& b) {
  detail::check_batches(a, b, "brute_force_pairs");
  const std::size_t n = a.rows();
  if (n > 8) throw ConfigError("brute_force_pairs: batch size " + std::to_string(n) + " > 8 refused");
  if (n == 0) return {};
  const auto cost = sq_euclidean_costs(a, b);
  const double tol = detail::tie_tolerance(cost);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CouplingPlan best{perm, std::numeric_limits<double>::infinity()};
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
    if (c < best.cost - tol) best = {perm, c};
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.cost = plan_cost(a, b, best.perm);
  return best;
}

/// Applies a plan: row i of the result is target row perm[i].
inline Tensor apply_plan(const Tensor& target, const CouplingPlan& plan) { return target.gather_rows(plan.perm); }

}  // namespace fdm
