// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdm/adam.hpp"
#include "fdm/coupling.hpp"
#include "fdm/data.hpp"
#include "fdm/interpolants.hpp"
#include "fdm/networks.hpp"

namespace fdm {

using Json = nlohmann::ordered_json;

enum class TrainMode { fdm, gcm };

inline std::string to_string(TrainMode m) { return m == TrainMode::fdm ? "fdm" : "gcm"; }

/// How the weak-supervision anchors are produced when not listed inline:
/// `count` source and target draws from a dedicated stream, paired by
/// exact OT so the anchors describe a plausible transport.
struct AnchorSpec {
  std::size_t count = 0;
  std::uint64_t seed = 1;
};

struct TrainConfig {
  TrainMode mode = TrainMode::fdm;
  std::uint64_t seed = 0;
  DatasetSpec source{DatasetKind::two_gaussians};
  DatasetSpec target{DatasetKind::two_moons};

  GeneratorSpec generator;
  double penalty_weight = 10.0;
  AnchorSpec anchors;
  std::optional<PairedSet> pairs;

  ConsistencyNetSpec consistency;
  InterpolantSpec interpolant;
  CouplingKind coupling = CouplingKind::ot;
  std::size_t ot_max_batch = 512;

  std::size_t batch_size = 256;
  std::size_t n_times = 100;
  std::size_t t_f = 50;
  std::size_t t_g = 20;
  std::size_t outer_iters = 300;
  /// f- as a per-step exponential moving average of f; 0 instead keeps a
  /// copy refreshed at the start of each phase. g- is always the per-phase
  /// copy.
  double ema_decay = 0.5;
  /// gcm only: draw one batch and use it as both endpoints.
  bool shared_batches = false;
  double divergence_threshold = 1e6;
  std::size_t checkpoint_interval = 0;

  AdamConfig optimizer_f;
  AdamConfig optimizer_g;

  std::size_t eval_interval = 10;
  std::size_t eval_samples = 1000;
  std::size_t eval_projections = 64;

  std::string output_dir = "runs/default";

  double dt() const { return 1.0 / static_cast<double>(n_times); }
};

namespace detail {

/// Walks a JSON object, collecting one message per offending key.
class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& errors) : errors_(errors) {}

  void object(const Json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) {
      errors_.push_back(label(path) + ": expected an object");
      return;
    }
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) errors_.push_back("'" + join(path, k) + "': unknown key");
  }

  template <class T, class Check>
  void get(const Json& j, const std::string& path, const std::string& key, T& out, Check check,
           const char* expectation) {
    if (!j.is_object() || !j.contains(key)) return;
    const Json& v = j.at(key);
    try {
      T tmp = v.get<T>();
      if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() && !v.is_boolean()) throw std::runtime_error("type");
        if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) throw std::runtime_error("type");
        } else {
          if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw std::runtime_error("sign");
        }
      }
      if (!check(tmp)) throw std::runtime_error("range");
      out = tmp;
    } catch (const std::exception&) {
      errors_.push_back("'" + join(path, key) + "': expected " + expectation + ", got " + v.dump());
    }
  }

  template <class T>
  void get(const Json& j, const std::string& path, const std::string& key, T& out, const char* expectation) {
    get(j, path, key, out, [](const T&) { return true; }, expectation);
  }

  template <class Parse>
  void enumerated(const Json& j, const std::string& path, const std::string& key, Parse parse) {
    if (!j.is_object() || !j.contains(key)) return;
    const Json& v = j.at(key);
    if (!v.is_string()) {
      errors_.push_back("'" + join(path, key) + "': expected a string, got " + v.dump());
      return;
    }
    try {
      parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      errors_.push_back("'" + join(path, key) + "': " + e.what());
    }
  }

  void error(const std::string& path, const std::string& msg) { errors_.push_back("'" + path + "': " + msg); }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  static std::string label(const std::string& path) { return path.empty() ? "config" : "'" + path + "'"; }
  std::vector<std::string>& errors_;
};

inline bool positive(double v) { return v > 0.0; }
inline bool positive_size(std::size_t v) { return v > 0; }

inline Json matrix_json(const Tensor& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back(std::vector<double>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

inline std::optional<Tensor> matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) return std::nullopt;
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) return std::nullopt;
  Tensor t(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) return std::nullopt;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) return std::nullopt;
      t(r, c) = j[r][c].get<double>();
    }
  }
  return t;
}

inline void read_dataset(ConfigReader& rd, const Json& j, const std::string& path, DatasetSpec& d) {
  rd.object(j, path, {"kind", "std", "offset", "radius", "latent_dim", "path"});
  rd.enumerated(j, path, "kind", [&](const std::string& s) { d.kind = parse_dataset_kind(s); });
  rd.get(j, path, "std", d.std, [](double v) { return v >= 0.0; }, "a non-negative number");
  rd.get(j, path, "offset", d.offset, "a number");
  rd.get(j, path, "radius", d.radius, positive, "a positive number");
  rd.get(j, path, "latent_dim", d.latent_dim, positive_size, "a positive integer");
  rd.get(j, path, "path", d.path, "a string");
  if (d.kind == DatasetKind::point_cloud_file && d.path.empty())
    rd.error(ConfigReader::join(path, "path"), "required for kind point-cloud-file");
}

inline Json dataset_json(const DatasetSpec& d) {
  Json j;
  j["kind"] = to_string(d.kind);
  j["std"] = d.effective_std();
  j["offset"] = d.offset;
  j["radius"] = d.radius;
  j["latent_dim"] = d.latent_dim;
  j["path"] = d.path;
  return j;
}

inline void read_adam(ConfigReader& rd, const Json& j, const std::string& path, AdamConfig& a) {
  rd.object(j, path, {"lr", "beta1", "beta2", "eps"});
  rd.get(j, path, "lr", a.lr, positive, "a positive number");
  rd.get(j, path, "beta1", a.beta1, [](double v) { return v >= 0.0 && v < 1.0; }, "a number in [0,1)");
  rd.get(j, path, "beta2", a.beta2, [](double v) { return v >= 0.0 && v < 1.0; }, "a number in [0,1)");
  rd.get(j, path, "eps", a.eps, positive, "a positive number");
}

inline Json adam_json(const AdamConfig& a) { return Json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}}; }

}  // namespace detail

/// Parses and validates a configuration document. Every offending key is
/// reported; the thrown ConfigError lists them one per line.
inline TrainConfig config_from_json(const Json& j) {
  using detail::ConfigReader;
  std::vector<std::string> errors;
  ConfigReader rd(errors);
  TrainConfig c;
  rd.object(j, "",
            {"mode", "seed", "source", "target", "generator", "consistency", "interpolant", "coupling", "training",
             "optimizer_f", "optimizer_g", "eval", "output_dir"});
  if (!j.is_object()) throw ConfigError("config: expected a JSON object at top level");

  rd.enumerated(j, "", "mode", [&](const std::string& s) {
    if (s == "fdm") c.mode = TrainMode::fdm;
    else if (s == "gcm") c.mode = TrainMode::gcm;
    else throw ConfigError("unknown mode '" + s + "' (expected fdm or gcm)");
  });
  rd.get(j, "", "seed", c.seed, "a non-negative integer");
  rd.get(j, "", "output_dir", c.output_dir, "a string");
  if (j.contains("source")) detail::read_dataset(rd, j["source"], "source", c.source);
  if (j.contains("target")) detail::read_dataset(rd, j["target"], "target", c.target);

  bool anchors_given = false;
  if (j.contains("generator")) {
    const Json& g = j["generator"];
    rd.object(g, "generator",
              {"mode", "input_dim", "output_dim", "hidden", "activation", "final_init_scale", "penalty_weight",
               "anchors", "pairs"});
    rd.enumerated(g, "generator", "mode", [&](const std::string& s) { c.generator.mode = parse_generator_mode(s); });
    rd.get(g, "generator", "input_dim", c.generator.input_dim, detail::positive_size, "a positive integer");
    rd.get(g, "generator", "output_dim", c.generator.output_dim, detail::positive_size, "a positive integer");
    rd.get(g, "generator", "hidden", c.generator.hidden,
           [](const std::vector<std::size_t>& h) { return std::all_of(h.begin(), h.end(), [](auto v) { return v > 0; }); },
           "a list of positive integers");
    rd.enumerated(g, "generator", "activation", [&](const std::string& s) { c.generator.activation = parse_activation(s); });
    rd.get(g, "generator", "final_init_scale", c.generator.final_init_scale, [](double v) { return v >= 0.0; },
           "a non-negative number");
    rd.get(g, "generator", "penalty_weight", c.penalty_weight, [](double v) { return v >= 0.0; },
           "a non-negative number");
    if (g.is_object() && g.contains("anchors")) {
      anchors_given = true;
      const Json& a = g["anchors"];
      rd.object(a, "generator.anchors", {"count", "seed"});
      rd.get(a, "generator.anchors", "count", c.anchors.count, detail::positive_size, "a positive integer");
      rd.get(a, "generator.anchors", "seed", c.anchors.seed, "a non-negative integer");
    }
    if (g.is_object() && g.contains("pairs") && !g["pairs"].is_null()) {
      const Json& p = g["pairs"];
      rd.object(p, "generator.pairs", {"z", "x"});
      auto z = p.is_object() && p.contains("z") ? detail::matrix_from_json(p["z"]) : std::nullopt;
      auto x = p.is_object() && p.contains("x") ? detail::matrix_from_json(p["x"]) : std::nullopt;
      if (!z || !x || z->rows() != x->rows())
        rd.error("generator.pairs", "expected {\"z\": [[...]], \"x\": [[...]]} with equal, nonzero row counts");
      else
        c.pairs = PairedSet{*z, *x};
    }
  }

  if (j.contains("consistency")) {
    const Json& f = j["consistency"];
    rd.object(f, "consistency", {"hidden", "activation", "num_frequencies", "final_init_scale"});
    rd.get(f, "consistency", "hidden", c.consistency.hidden,
           [](const std::vector<std::size_t>& h) { return std::all_of(h.begin(), h.end(), [](auto v) { return v > 0; }); },
           "a list of positive integers");
    rd.enumerated(f, "consistency", "activation", [&](const std::string& s) { c.consistency.activation = parse_activation(s); });
    rd.get(f, "consistency", "num_frequencies", c.consistency.num_frequencies, "a non-negative integer");
    rd.get(f, "consistency", "final_init_scale", c.consistency.final_init_scale, [](double v) { return v >= 0.0; },
           "a non-negative number");
  }

  if (j.contains("interpolant")) {
    const Json& i = j["interpolant"];
    rd.object(i, "interpolant", {"kind", "sigma_max"});
    rd.enumerated(i, "interpolant", "kind", [&](const std::string& s) { c.interpolant.kind = parse_interpolant_kind(s); });
    rd.get(i, "interpolant", "sigma_max", c.interpolant.sigma_max, detail::positive, "a positive number");
  }

  if (j.contains("coupling")) {
    const Json& cp = j["coupling"];
    rd.object(cp, "coupling", {"kind", "max_batch"});
    rd.enumerated(cp, "coupling", "kind", [&](const std::string& s) { c.coupling = parse_coupling_kind(s); });
    rd.get(cp, "coupling", "max_batch", c.ot_max_batch, detail::positive_size, "a positive integer");
  }

  if (j.contains("training")) {
    const Json& t = j["training"];
    rd.object(t, "training",
              {"batch_size", "n_times", "t_f", "t_g", "outer_iters", "ema_decay", "shared_batches",
               "divergence_threshold", "checkpoint_interval"});
    rd.get(t, "training", "batch_size", c.batch_size, [](std::size_t v) { return v >= 2; }, "an integer >= 2");
    rd.get(t, "training", "n_times", c.n_times, detail::positive_size, "a positive integer");
    rd.get(t, "training", "t_f", c.t_f, detail::positive_size, "an integer >= 1");
    rd.get(t, "training", "t_g", c.t_g, detail::positive_size, "an integer >= 1");
    rd.get(t, "training", "outer_iters", c.outer_iters, "a non-negative integer");
    rd.get(t, "training", "ema_decay", c.ema_decay, [](double v) { return v >= 0.0 && v < 1.0; }, "a number in [0,1)");
    rd.get(t, "training", "shared_batches", c.shared_batches, "a boolean");
    rd.get(t, "training", "divergence_threshold", c.divergence_threshold, detail::positive, "a positive number");
    rd.get(t, "training", "checkpoint_interval", c.checkpoint_interval, "a non-negative integer");
  }
  if (j.contains("optimizer_f")) detail::read_adam(rd, j["optimizer_f"], "optimizer_f", c.optimizer_f);
  if (j.contains("optimizer_g")) detail::read_adam(rd, j["optimizer_g"], "optimizer_g", c.optimizer_g);

  if (j.contains("eval")) {
    const Json& e = j["eval"];
    rd.object(e, "eval", {"interval", "samples", "n_projections"});
    rd.get(e, "eval", "interval", c.eval_interval, "a non-negative integer");
    rd.get(e, "eval", "samples", c.eval_samples, [](std::size_t v) { return v >= 2; }, "an integer >= 2");
    rd.get(e, "eval", "n_projections", c.eval_projections, detail::positive_size, "a positive integer");
  }

  // Cross-field rules.
  if (c.mode == TrainMode::fdm && c.interpolant.kind == InterpolantKind::ve)
    rd.error("interpolant.kind", "ve requires mode gcm (its first endpoint is noise, not a generator output)");
  if (c.generator.mode == GeneratorMode::weakly_supervised && c.mode == TrainMode::fdm && !c.pairs &&
      c.anchors.count == 0)
    rd.error("generator", "weakly-supervised mode needs generator.pairs or generator.anchors.count >= 1");
  if (anchors_given && c.pairs) rd.error("generator", "give either anchors or pairs, not both");
  if (c.coupling == CouplingKind::ot && c.batch_size > c.ot_max_batch)
    rd.error("training.batch_size", "exceeds coupling.max_batch (" + std::to_string(c.ot_max_batch) + ")");

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

/// Full echo with every default made explicit; config_from_json inverts it.
inline Json config_to_json(const TrainConfig& c) {
  Json j;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  j["source"] = detail::dataset_json(c.source);
  j["target"] = detail::dataset_json(c.target);
  Json g;
  g["mode"] = to_string(c.generator.mode);
  g["input_dim"] = c.generator.input_dim;
  g["output_dim"] = c.generator.output_dim;
  g["hidden"] = c.generator.hidden;
  g["activation"] = to_string(c.generator.activation);
  g["final_init_scale"] = c.generator.final_init_scale;
  g["penalty_weight"] = c.penalty_weight;
  if (c.pairs) g["pairs"] = Json{{"z", detail::matrix_json(c.pairs->z)}, {"x", detail::matrix_json(c.pairs->x)}};
  else g["anchors"] = Json{{"count", c.anchors.count}, {"seed", c.anchors.seed}};
  if (!c.pairs && c.anchors.count == 0) g.erase("anchors");
  j["generator"] = g;
  j["consistency"] = Json{{"hidden", c.consistency.hidden},
                          {"activation", to_string(c.consistency.activation)},
                          {"num_frequencies", c.consistency.num_frequencies},
                          {"final_init_scale", c.consistency.final_init_scale}};
  j["interpolant"] = Json{{"kind", to_string(c.interpolant.kind)}, {"sigma_max", c.interpolant.sigma_max}};
  j["coupling"] = Json{{"kind", to_string(c.coupling)}, {"max_batch", c.ot_max_batch}};
  j["training"] = Json{{"batch_size", c.batch_size},
                       {"n_times", c.n_times},
                       {"t_f", c.t_f},
                       {"t_g", c.t_g},
                       {"outer_iters", c.outer_iters},
                       {"ema_decay", c.ema_decay},
                       {"shared_batches", c.shared_batches},
                       {"divergence_threshold", c.divergence_threshold},
                       {"checkpoint_interval", c.checkpoint_interval}};
  j["optimizer_f"] = detail::adam_json(c.optimizer_f);
  j["optimizer_g"] = detail::adam_json(c.optimizer_g);
  j["eval"] = Json{{"interval", c.eval_interval}, {"samples", c.eval_samples}, {"n_projections", c.eval_projections}};
  j["output_dir"] = c.output_dir;
  return j;
}

/// Markdown table of every configuration key with its default.
inline std::string config_reference() {
  struct Entry {
    const char* key;
    const char* doc;
  };
  static const Entry entries[] = {
      {"mode", "fdm (generator + consistency net) or gcm (consistency net between two datasets)"},
      {"seed", "root seed; initialization, training and evaluation streams are forked from it"},
      {"source.kind", "two-gaussians, eight-gaussians, two-moons, point-cloud-file or standard-normal-latent"},
      {"source.std", "per-coordinate noise std (kind default when omitted)"},
      {"source.offset", "two-gaussians: centers at (+-offset, 0)"},
      {"source.radius", "eight-gaussians: ring radius"},
      {"source.latent_dim", "standard-normal-latent: dimension D"},
      {"source.path", "point-cloud-file: headerless CSV, one sample per line"},
      {"target.kind", "as source.kind"},
      {"target.std", "as source.std"},
      {"target.offset", "as source.offset"},
      {"target.radius", "as source.radius"},
      {"target.latent_dim", "as source.latent_dim"},
      {"target.path", "as source.path"},
      {"generator.mode", "unconstrained-mlp, linear-map or weakly-supervised"},
      {"generator.input_dim", "latent dimension D (must match the source)"},
      {"generator.output_dim", "data dimension N (must match the target)"},
      {"generator.hidden", "hidden layer widths of the MLP modes"},
      {"generator.activation", "tanh, softplus or relu"},
      {"generator.final_init_scale", "scale of the last layer's initial weights"},
      {"generator.penalty_weight", "weakly-supervised: weight of the anchor penalty"},
      {"generator.anchors.count", "weakly-supervised: number of anchor pairs drawn from the datasets"},
      {"generator.anchors.seed", "weakly-supervised: seed of the anchor draw"},
      {"generator.pairs.z", "weakly-supervised: explicit anchor inputs, list of rows"},
      {"generator.pairs.x", "weakly-supervised: explicit anchor outputs, list of rows"},
      {"consistency.hidden", "hidden layer widths of the consistency net trunk"},
      {"consistency.activation", "tanh, softplus or relu"},
      {"consistency.num_frequencies", "Fourier time features: sin/cos(2^k pi t) for k below this"},
      {"consistency.final_init_scale", "scale of the trunk's last layer at init (0 starts f_t at the identity)"},
      {"interpolant.kind", "linear (fdm and gcm) or ve (gcm only)"},
      {"interpolant.sigma_max", "ve: noise scale at t = 0"},
      {"coupling.kind", "ot (exact minibatch assignment) or independent"},
      {"coupling.max_batch", "largest batch the exact assignment accepts"},
      {"training.batch_size", "samples per step"},
      {"training.n_times", "time grid resolution; dt = 1 / n_times"},
      {"training.t_f", "consistency steps per outer iteration"},
      {"training.t_g", "generator steps per outer iteration"},
      {"training.outer_iters", "outer iterations"},
      {"training.ema_decay", "0 refreshes f- per phase; (0,1) tracks f- as a per-step moving average"},
      {"training.shared_batches", "gcm: use one draw as both endpoints of every pair"},
      {"training.divergence_threshold", "abort when a loss is non-finite or exceeds this"},
      {"training.checkpoint_interval", "also write the checkpoint every this many outer iterations (0: end only)"},
      {"optimizer_f.lr", "Adam learning rate, consistency net"},
      {"optimizer_f.beta1", "Adam first-moment decay"},
      {"optimizer_f.beta2", "Adam second-moment decay"},
      {"optimizer_f.eps", "Adam denominator offset"},
      {"optimizer_g.lr", "Adam learning rate, generator"},
      {"optimizer_g.beta1", "Adam first-moment decay"},
      {"optimizer_g.beta2", "Adam second-moment decay"},
      {"optimizer_g.eps", "Adam denominator offset"},
      {"eval.interval", "evaluate MMD and sliced W every this many outer iterations (0: last only)"},
      {"eval.samples", "samples per side for evaluation"},
      {"eval.n_projections", "random directions for sliced W"},
      {"output_dir", "directory for checkpoint.json, metrics.csv and manifest.json"},
  };
  const Json defaults = config_to_json(TrainConfig{});
  std::string out = "# Configuration reference\n\nConfigs are JSON objects. Every key is optional; unknown keys are "
                    "rejected. Use `--override key=value` on the command line to set dotted keys.\n\n"
                    "| key | default | meaning |\n|---|---|---|\n";
  for (const auto& e : entries) {
    std::string pointer = "/" + std::string(e.key);
    for (auto& ch : pointer)
      if (ch == '.') ch = '/';
    const Json::json_pointer ptr(pointer);
    const std::string def = defaults.contains(ptr) ? "`" + defaults.at(ptr).dump() + "`" : "(unset)";
    out += "| `" + std::string(e.key) + "` | " + def + " | " + e.doc + " |\n";
  }
  return out;
}

/// Sets a dotted key (e.g. "training.outer_iters=5"). The value is parsed
/// as JSON when possible and taken as a plain string otherwise.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const std::exception&) {
    value = raw;
  }
  Json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + assignment + "': '" + part + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    pos = dot + 1;
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

inline TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Json j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace fdm
