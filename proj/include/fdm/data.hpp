// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fdm/rng.hpp"
#include "fdm/tensor.hpp"

namespace fdm {

enum class DatasetKind { two_gaussians, eight_gaussians, two_moons, point_cloud_file, standard_normal_latent };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::two_gaussians: return "two-gaussians";
    case DatasetKind::eight_gaussians: return "eight-gaussians";
    case DatasetKind::two_moons: return "two-moons";
    case DatasetKind::point_cloud_file: return "point-cloud-file";
    case DatasetKind::standard_normal_latent: return "standard-normal-latent";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "two-gaussians") return DatasetKind::two_gaussians;
  if (s == "eight-gaussians") return DatasetKind::eight_gaussians;
  if (s == "two-moons") return DatasetKind::two_moons;
  if (s == "point-cloud-file") return DatasetKind::point_cloud_file;
  if (s == "standard-normal-latent") return DatasetKind::standard_normal_latent;
  throw ConfigError("unknown dataset kind '" + s +
                    "' (expected two-gaussians, eight-gaussians, two-moons, point-cloud-file or "
                    "standard-normal-latent)");
}

/// Toy distribution definitions. Defaults:
///   two-gaussians   centers (+-offset, 0), offset 2, std 0.3
///   eight-gaussians unit-radius ring, 45 degree spacing, std 0.1
///   two-moons       standard half circles, noise std 0.05
///   standard-normal-latent  N(0, I) in `latent_dim` dimensions
///   point-cloud-file rows of a CSV file, sampled with replacement
struct DatasetSpec {
  DatasetKind kind = DatasetKind::two_gaussians;
  double std = -1.0;  // < 0: kind default
  double offset = 2.0;
  double radius = 1.0;
  std::size_t latent_dim = 2;
  std::string path{};

  double effective_std() const {
    if (std >= 0.0) return std;
    switch (kind) {
      case DatasetKind::two_gaussians: return 0.3;
      case DatasetKind::eight_gaussians: return 0.1;
      case DatasetKind::two_moons: return 0.05;
      default: return 1.0;
    }
  }
};

/// Reads a headerless CSV of decimals, one sample per line.
inline Tensor load_point_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point cloud '" + path + "'");
  std::vector<double> data;
  std::size_t width = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (true) {
      std::size_t end = line.find(',', pos);
      std::string field = line.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      const auto first = field.find_first_not_of(" \t");
      const auto last = field.find_last_not_of(" \t");
      if (first == std::string::npos) throw ParseError("empty field in '" + path + "'", line_no);
      field = field.substr(first, last - first + 1);
      double v = 0.0;
      const char* b = field.data();
      const char* e = b + field.size();
      if (*b == '+') ++b;
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e) throw ParseError("non-numeric field '" + field + "' in '" + path + "'", line_no);
      if (!std::isfinite(v)) throw ParseError("non-finite value in '" + path + "'", line_no);
      data.push_back(v);
      ++count;
      if (end == std::string::npos) break;
      pos = end + 1;
    }
    if (rows == 0) width = count;
    else if (count != width)
      throw ParseError("ragged row in '" + path + "': " + std::to_string(count) + " fields, expected " +
                           std::to_string(width),
                       line_no);
    ++rows;
  }
  if (rows == 0) throw ParseError("point cloud '" + path + "' is empty", line_no);
  return Tensor(Shape{rows, width}, std::move(data));
}

/// Shortest round-trip decimal formatting, so a reload is bit-identical.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string point_cloud_csv(const Tensor& batch) {
  std::string out;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto row = batch.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += format_double(row[k]);
    }
    out += '\n';
  }
  return out;
}

inline void save_point_cloud(const Tensor& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << point_cloud_csv(batch);
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// A sampler bound to one spec; point-cloud files are read once.
class Dataset {
 public:
  explicit Dataset(DatasetSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind == DatasetKind::point_cloud_file) cloud_ = std::make_shared<Tensor>(load_point_cloud(spec_.path));
    if (spec_.kind == DatasetKind::standard_normal_latent && spec_.latent_dim == 0)
      throw ConfigError("standard-normal-latent requires latent_dim >= 1");
  }

  const DatasetSpec& spec() const { return spec_; }

  std::size_t dim() const {
    switch (spec_.kind) {
      case DatasetKind::point_cloud_file: return cloud_->cols();
      case DatasetKind::standard_normal_latent: return spec_.latent_dim;
      default: return 2;
    }
  }

  const Tensor* cloud() const { return cloud_.get(); }

  Tensor sample(std::size_t n, Rng& rng) const {
    Tensor out(n, dim());
    const double s = spec_.effective_std();
    for (std::size_t i = 0; i < n; ++i) {
      auto row = out.row(i);
      switch (spec_.kind) {
        case DatasetKind::two_gaussians: {
          const double cx = rng.below(2) == 0 ? -spec_.offset : spec_.offset;
          row[0] = cx + s * rng.normal();
          row[1] = s * rng.normal();
          break;
        }
        case DatasetKind::eight_gaussians: {
          const double angle = static_cast<double>(rng.below(8)) * std::numbers::pi / 4.0;
          row[0] = spec_.radius * std::cos(angle) + s * rng.normal();
          row[1] = spec_.radius * std::sin(angle) + s * rng.normal();
          break;
        }
        case DatasetKind::two_moons: {
          const double theta = std::numbers::pi * rng.uniform();
          if (rng.below(2) == 0) {
            row[0] = std::cos(theta);
            row[1] = std::sin(theta);
          } else {
            row[0] = 1.0 - std::cos(theta);
            row[1] = 0.5 - std::sin(theta);
          }
          row[0] += s * rng.normal();
          row[1] += s * rng.normal();
          break;
        }
        case DatasetKind::point_cloud_file: {
          auto src = cloud_->row(rng.below(cloud_->rows()));
          std::copy(src.begin(), src.end(), row.begin());
          break;
        }
        case DatasetKind::standard_normal_latent:
          for (auto& v : row) v = rng.normal();
          break;
      }
    }
    return out;
  }

 private:
  DatasetSpec spec_;
  std::shared_ptr<const Tensor> cloud_;
};

/// Deterministic in (spec, n, seed).
inline Tensor sample(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample: n must be >= 1");
  Rng rng(seed);
  return Dataset(spec).sample(n, rng);
}

/// Index of the eight-gaussians component nearest to a point.
inline std::size_t eight_gaussians_mode(std::span<const double> p) {
  double a = std::atan2(p[1], p[0]);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return static_cast<std::size_t>(std::lround(a / (std::numbers::pi / 4.0))) % 8;
}

}  // namespace fdm
