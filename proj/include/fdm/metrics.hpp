// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fdm/rng.hpp"
#include "fdm/tensor.hpp"

namespace fdm {

namespace detail {

inline void check_same_width(const Tensor& x, const Tensor& y, const char* what) {
  if (x.cols() != y.cols())
    throw ConfigError(std::string(what) + ": sample widths differ (" + std::to_string(x.cols()) + " vs " +
                      std::to_string(y.cols()) + ")");
}

}  // namespace detail

/// Median Euclidean distance over all distinct pairs of the pooled sample.
inline double median_pairwise_distance(const Tensor& x, const Tensor& y) {
  const std::size_t n = x.rows(), m = y.rows(), total = n + m;
  auto pooled = [&](std::size_t i) { return i < n ? x.row(i) : y.row(i - n); };
  std::vector<double> d;
  d.reserve(total * (total - 1) / 2);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) d.push_back(sq_dist(pooled(i), pooled(j)));
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return std::sqrt(med);
}

struct MmdResult {
  double value = 0.0;
  double bandwidth = 1.0;
  bool bandwidth_fallback = false;
};

/// Unbiased MMD^2 with k(a, b) = exp(-||a - b||^2 / (2 h^2)); diagonal terms
/// of the within-sample sums are excluded. Without an explicit bandwidth the
/// median heuristic is used, falling back to 1.0 when all points coincide.
inline MmdResult mmd_detail(const Tensor& x, const Tensor& y, std::optional<double> bandwidth = std::nullopt) {
  detail::check_same_width(x, y, "mmd");
  const std::size_t n = x.rows(), m = y.rows();
  if (n < 2 || m < 2) throw ConfigError("mmd: need at least two samples on each side");
  MmdResult r;
  if (bandwidth) {
    if (!(*bandwidth > 0.0)) throw DomainError("mmd: bandwidth must be positive");
    r.bandwidth = *bandwidth;
  } else {
    const double med = median_pairwise_distance(x, y);
    if (med > 0.0) {
      r.bandwidth = med;
    } else {
      r.bandwidth = 1.0;
      r.bandwidth_fallback = true;
    }
  }
  const double gamma = 1.0 / (2.0 * r.bandwidth * r.bandwidth);
  auto within = [&](const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = i + 1; j < a.rows(); ++j) s += std::exp(-gamma * sq_dist(a.row(i), a.row(j)));
    const double k = static_cast<double>(a.rows());
    return 2.0 * s / (k * (k - 1.0));
  };
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cross += std::exp(-gamma * sq_dist(x.row(i), y.row(j)));
  cross /= static_cast<double>(n) * static_cast<double>(m);
  r.value = within(x) + within(y) - 2.0 * cross;
  return r;
}

inline double mmd(const Tensor& x, const Tensor& y, std::optional<double> bandwidth = std::nullopt) {
  return mmd_detail(x, y, bandwidth).value;
}

/// Exact squared 2-Wasserstein distance between two empirical measures on
/// the real line (uniform weights, sizes may differ).
inline double wasserstein1d_squared(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double pos = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / n;
    const double next_b = static_cast<double>(j + 1) / m;
    const double next = std::min(next_a, next_b);
    const double d = a[i] - b[j];
    total += (next - pos) * d * d;
    pos = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

/// Mean over seeded random unit directions of the 1-D W2 distance between
/// the projected samples.
inline double sliced_wasserstein(const Tensor& x, const Tensor& y, std::size_t n_projections, std::uint64_t seed) {
  detail::check_same_width(x, y, "sliced_wasserstein");
  if (n_projections == 0) throw ConfigError("sliced_wasserstein: n_projections must be >= 1");
  if (x.rows() == 0 || y.rows() == 0) throw ConfigError("sliced_wasserstein: empty sample");
  const std::size_t d = x.cols();
  Rng rng(seed);
  std::vector<double> dir(d), px(x.rows()), py(y.rows());
  double acc = 0.0;
  for (std::size_t p = 0; p < n_projections; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& v : dir) v /= norm;
    auto project = [&](const Tensor& t, std::vector<double>& out) {
      for (std::size_t r = 0; r < t.rows(); ++r) {
        double s = 0.0;
        auto row = t.row(r);
        for (std::size_t k = 0; k < d; ++k) s += row[k] * dir[k];
        out[r] = s;
      }
    };
    project(x, px);
    project(y, py);
    acc += std::sqrt(std::max(0.0, wasserstein1d_squared(px, py)));
  }
  return acc / static_cast<double>(n_projections);
}

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic, so >= 0).
inline double energy_distance(const Tensor& x, const Tensor& y) {
  detail::check_same_width(x, y, "energy_distance");
  if (x.rows() == 0 || y.rows() == 0) throw ConfigError("energy_distance: empty sample");
  auto mean_dist = [](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.rows(); ++j) s += std::sqrt(sq_dist(a.row(i), b.row(j)));
    return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
  };
  return std::max(0.0, 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y));
}

struct MetricReport {
  double mmd = 0.0;
  double sliced_w = 0.0;
  double energy_distance = 0.0;
  std::size_t n_samples = 0;
  double bandwidth = 1.0;
  bool bandwidth_fallback = false;
};

inline MetricReport compare_samples(const Tensor& x, const Tensor& y, std::uint64_t seed,
                                    std::size_t n_projections = 64) {
  const auto m = mmd_detail(x, y);
  MetricReport r;
  r.mmd = m.value;
  r.bandwidth = m.bandwidth;
  r.bandwidth_fallback = m.bandwidth_fallback;
  r.sliced_w = sliced_wasserstein(x, y, n_projections, seed);
  r.energy_distance = energy_distance(x, y);
  r.n_samples = std::min(x.rows(), y.rows());
  return r;
}

}  // namespace fdm
