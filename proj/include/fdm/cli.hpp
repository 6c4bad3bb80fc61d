// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line front end: train, eval, sample, plot, config-reference.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdm/fdm.hpp"

#ifndef FDM_VERSION_STRING
#define FDM_VERSION_STRING "0.1.0"
#endif

namespace fdm::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2 };

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Checksummed inventory entry for a file the run wrote.
inline Json file_entry(const std::filesystem::path& p) {
  const std::string bytes = read_file_bytes(p.string());
  return Json{{"path", p.filename().string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}};
}

struct Manifest {
  Json config;
  std::vector<std::string> overrides;
  std::string started, finished, status = "running", error;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> files;

  Json to_json() const {
    Json j;
    j["version"] = FDM_VERSION_STRING;
    j["started"] = started;
    j["finished"] = finished;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["seed"] = seed;
    j["overrides"] = overrides;
    j["config"] = config;
    Json inv = Json::array();
    for (const auto& f : files)
      if (std::filesystem::exists(f)) inv.push_back(file_entry(f));
    j["files"] = inv;
    return j;
  }
};

/// The checkpoint's datasets, re-validated against its networks.
inline std::pair<Dataset, Dataset> checkpoint_datasets(const Checkpoint& ck) {
  auto ds = resolve_datasets(ck.config);
  if (ds.second.dim() != ck.f.dim())
    throw ConfigError("checkpoint/dataset mismatch: target has dimension " + std::to_string(ds.second.dim()) +
                      " but the checkpoint's consistency net has " + std::to_string(ck.f.dim()));
  return ds;
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& resume_path, bool quiet, std::ostream& out, std::ostream& err) {
  TrainConfig config;
  Json echo;
  try {
    Json j = read_json_file(config_path);
    for (const auto& o : overrides) apply_override(j, o);
    config = config_from_json(j);
    resolve_datasets(config);
    echo = config_to_json(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  namespace fs = std::filesystem;
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    err << "error: cannot create output directory '" << dir.string() << "': " << ec.message() << "\n";
    return kRuntime;
  }
  const fs::path ckpt = dir / "checkpoint.json", metrics = dir / "metrics.csv", manifest_path = dir / "manifest.json";

  Manifest m;
  m.config = echo;
  m.overrides = overrides;
  m.seed = config.seed;
  m.started = utc_timestamp();
  m.files = {ckpt, metrics};
  auto write_manifest = [&] {
    m.finished = utc_timestamp();
    write_file_bytes(manifest_path.string(), m.to_json().dump(2) + "\n");
  };

  int code = kOk;
  try {
    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);
    TrainOptions opts;
    opts.checkpoint_path = ckpt.string();
    opts.metrics_path = metrics.string();
    if (!quiet)
      opts.on_metrics = [&](const MetricsRow& r) {
        out << "iter " << r.outer_iter << "  consistency " << format_double(r.consistency_loss) << "  generator "
            << format_double(r.generator_loss);
        if (r.mmd) out << "  mmd " << format_double(*r.mmd) << "  sliced_w " << format_double(*r.sliced_w);
        out << "\n" << std::flush;
      };
    train(config, opts, std::move(resume));
    m.status = "completed";
  } catch (const NumericalDivergence& e) {
    m.status = "diverged";
    m.error = e.what();
    err << "error: " << e.what() << " (last good state kept in " << ckpt.string() << ")\n";
    code = kRuntime;
  } catch (const ConfigError& e) {
    m.status = "failed";
    m.error = e.what();
    err << "error: " << e.what() << "\n";
    code = kUsage;
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error = e.what();
    err << "error: " << e.what() << "\n";
    code = kRuntime;
  }
  try {
    write_manifest();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  if (code == kOk && !quiet) out << "wrote " << ckpt.string() << ", " << metrics.string() << ", " << manifest_path.string() << "\n";
  return code;
}

struct EvalRow {
  std::string stage;
  MetricReport report;
};

/// Metrics of g(z) and f_0(g(z)) (f_0(x0) and x0 in gcm mode) against a
/// fresh target draw.
inline std::vector<EvalRow> evaluate_checkpoint(const Checkpoint& ck, std::size_t n, std::uint64_t seed,
                                                std::size_t n_projections = 64) {
  if (n < 2) throw ConfigError("eval: --n must be >= 2");
  auto [source, target] = checkpoint_datasets(ck);
  Rng rng(seed);
  const Tensor z = source.sample(n, rng);
  const Tensor x = target.sample(n, rng);
  const Tensor pushed = ck.g ? ck.g->evaluate(z) : z;
  const Tensor refined = ck.f.evaluate(pushed, 0.0);
  return {{ck.g ? "g" : "x0", compare_samples(pushed, x, seed, n_projections)},
          {ck.g ? "f0_g" : "f0_x0", compare_samples(refined, x, seed, n_projections)}};
}

inline int cmd_eval(const std::string& path, std::size_t n, std::uint64_t seed, bool csv, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(path);
  const auto rows = evaluate_checkpoint(ck, n, seed);
  if (csv) {
    out << "stage,n,mmd,sliced_w,energy_distance,bandwidth\n";
    for (const auto& r : rows)
      out << r.stage << "," << r.report.n_samples << "," << format_double(r.report.mmd) << ","
          << format_double(r.report.sliced_w) << "," << format_double(r.report.energy_distance) << ","
          << format_double(r.report.bandwidth) << "\n";
    return kOk;
  }
  out << "checkpoint " << path << " (outer iteration " << ck.outer_iter << ", n = " << n << ", seed = " << seed
      << ")\n";
  for (const auto& r : rows) {
    out << "  " << r.stage << ": mmd " << format_double(r.report.mmd) << "  sliced_w "
        << format_double(r.report.sliced_w) << "  energy " << format_double(r.report.energy_distance);
    if (r.report.bandwidth_fallback) out << "  (bandwidth fallback 1.0)";
    out << "\n";
  }
  return kOk;
}

inline int cmd_sample(const std::string& path, std::size_t n, const std::string& out_path, std::uint64_t seed) {
  const Checkpoint ck = load_checkpoint(path);
  auto [source, target] = checkpoint_datasets(ck);
  if (n == 0) {
    write_file_bytes(out_path, "");
    return kOk;
  }
  Rng rng(seed);
  const Tensor z = source.sample(n, rng);
  const Tensor x = ck.g ? ck.g->evaluate(z) : ck.f.evaluate(z, 0.0);
  write_file_bytes(out_path, point_cloud_csv(x));
  return kOk;
}

struct Layer {
  std::string label;
  std::string color;
  Tensor points;
};

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Scatter plot with a shared scale on both axes.
inline std::string render_svg(const std::vector<Layer>& layers, std::size_t px, std::size_t py,
                              const std::string& title) {
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& l : layers)
    for (std::size_t r = 0; r < l.points.rows(); ++r) {
      lo_x = std::min(lo_x, l.points(r, px));
      hi_x = std::max(hi_x, l.points(r, px));
      lo_y = std::min(lo_y, l.points(r, py));
      hi_y = std::max(hi_y, l.points(r, py));
    }
  if (!std::isfinite(lo_x)) lo_x = lo_y = -1.0, hi_x = hi_y = 1.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9}) * 1.05;
  const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
  const double size = 600.0, margin = 40.0, legend_w = 190.0;
  const double scale = size / span;
  auto sx = [&](double x) { return margin + size / 2 + (x - cx) * scale; };
  auto sy = [&](double y) { return margin + size / 2 - (y - cy) * scale; };

  std::ostringstream s;
  const double width = size + 2 * margin + legend_w, height = size + 2 * margin;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<title>" << title << "</title>\n"
    << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (const auto& l : layers) {
    s << "<g class=\"layer\" fill=\"" << l.color << "\" fill-opacity=\"0.6\">\n";
    for (std::size_t r = 0; r < l.points.rows(); ++r)
      s << "<circle cx=\"" << svg_number(sx(l.points(r, px))) << "\" cy=\"" << svg_number(sy(l.points(r, py)))
        << "\" r=\"1.6\"/>\n";
    s << "</g>\n";
  }
  s << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"13\">\n";
  double y = margin + 16;
  for (const auto& l : layers) {
    s << "<g class=\"legend-entry\"><circle cx=\"" << size + 2 * margin + 8 << "\" cy=\"" << y - 4
      << "\" r=\"5\" fill=\"" << l.color << "\"/><text x=\"" << size + 2 * margin + 20 << "\" y=\"" << y << "\">"
      << l.label << "</text></g>\n";
    y += 22;
  }
  s << "</g>\n"
    << "<text x=\"" << margin << "\" y=\"" << height - 12 << "\" font-family=\"sans-serif\" font-size=\"12\">x"
    << px << " vs x" << py << ", equal aspect</text>\n"
    << "</svg>\n";
  return s.str();
}

inline std::pair<std::size_t, std::size_t> parse_projection(const std::string& spec) {
  const auto comma = spec.find(',');
  if (comma == std::string::npos) throw ConfigError("--proj expects i,j");
  try {
    std::size_t used = 0;
    const std::string a = spec.substr(0, comma), b = spec.substr(comma + 1);
    const unsigned long i = std::stoul(a, &used);
    if (used != a.size()) throw std::invalid_argument(a);
    const unsigned long j = std::stoul(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
    return {i, j};
  } catch (const std::logic_error&) {
    throw ConfigError("--proj expects two non-negative integers i,j, got '" + spec + "'");
  }
}

inline int cmd_plot(const std::string& path, const std::string& out_path, const std::string& proj, std::size_t n,
                    std::uint64_t seed) {
  const Checkpoint ck = load_checkpoint(path);
  auto [source, target] = checkpoint_datasets(ck);
  const std::size_t d = source.dim(), big_n = target.dim();
  std::size_t px = 0, py = 1;
  if (proj.empty()) {
    if (d != 2 || big_n != 2)
      throw ConfigError("plot: data is not 2-D (source " + std::to_string(d) + ", target " + std::to_string(big_n) +
                        "); pass --proj i,j to choose two target coordinates");
  } else {
    std::tie(px, py) = parse_projection(proj);
    if (px >= big_n || py >= big_n || px == py)
      throw ConfigError("plot: --proj coordinates must be distinct and below " + std::to_string(big_n));
  }
  if (n == 0) throw ConfigError("plot: --n must be >= 1");
  Rng rng(seed);
  const Tensor z = source.sample(n, rng);
  const Tensor x = target.sample(n, rng);
  const Tensor pushed = ck.g ? ck.g->evaluate(z) : z;
  const Tensor refined = ck.f.evaluate(pushed, 0.0);
  std::vector<Layer> layers;
  if (d == 2) layers.push_back({"source z", "green", z});
  layers.push_back({"target x", "red", x});
  layers.push_back({ck.g ? "g(z)" : "x0", "black", pushed});
  layers.push_back({ck.g ? "f0(g(z))" : "f0(x0)", "blue", refined});
  write_file_bytes(out_path, render_svg(layers, px, py, "outer iteration " + std::to_string(ck.outer_iter)));
  return kOk;
}

/// Parses and runs one command. Messages go to `out`/`err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Train and inspect generator / consistency-model pairs on point clouds", "fdm"};
  app.set_version_flag("--version", std::string(FDM_VERSION_STRING));
  app.require_subcommand(1);

  std::string config_path, resume_path, ckpt_path, out_path, proj;
  std::vector<std::string> overrides;
  bool quiet = false, csv = false;
  std::size_t n = 2000;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "run training from a JSON config");
  train_cmd->add_option("config", config_path, "config file")->required();
  train_cmd->add_option("--override", overrides, "dotted key=value, repeatable");
  train_cmd->add_option("--resume", resume_path, "continue from a checkpoint");
  train_cmd->add_flag("--quiet", quiet, "no per-iteration output");

  auto* eval_cmd = app.add_subcommand("eval", "report MMD, sliced W and energy distance");
  eval_cmd->add_option("checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--n", n, "samples per side")->capture_default_str();
  eval_cmd->add_option("--seed", seed)->capture_default_str();
  eval_cmd->add_flag("--csv", csv, "CSV output");

  auto* sample_cmd = app.add_subcommand("sample", "write generator samples as CSV");
  sample_cmd->add_option("checkpoint", ckpt_path)->required();
  sample_cmd->add_option("--n", n)->required();
  sample_cmd->add_option("--out", out_path)->required();
  sample_cmd->add_option("--seed", seed)->capture_default_str();

  std::size_t plot_n = 1000;
  auto* plot_cmd = app.add_subcommand("plot", "SVG scatter of source, target, g(z) and f0(g(z))");
  plot_cmd->add_option("checkpoint", ckpt_path)->required();
  plot_cmd->add_option("--out", out_path)->required();
  plot_cmd->add_option("--proj", proj, "two target coordinates i,j");
  plot_cmd->add_option("--n", plot_n, "points per layer")->capture_default_str();
  plot_cmd->add_option("--seed", seed)->capture_default_str();

  auto* ref_cmd = app.add_subcommand("config-reference", "print every config key with its default (Markdown)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << FDM_VERSION_STRING << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'fdm --help' for usage\n";
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, overrides, resume_path, quiet, out, err);
    if (*eval_cmd) return cmd_eval(ckpt_path, n, seed, csv, out);
    if (*sample_cmd) return cmd_sample(ckpt_path, n, out_path, seed);
    if (*plot_cmd) return cmd_plot(ckpt_path, out_path, proj, plot_n, seed);
    if (*ref_cmd) {
      out << config_reference();
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace fdm::cli
