// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdm/rng.hpp"
#include "fdm/tape.hpp"

namespace fdm {

enum class Activation { tanh, softplus, relu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh, softplus or relu)");
}

struct MlpSpec {
  std::size_t input_dim = 2;
  std::size_t output_dim = 2;
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::tanh;
  /// Final-layer weights are drawn as N(0, 1/fan_in) times this factor;
  /// 0 gives an exactly zero final layer.
  double final_init_scale = 0.0;
};

/// Fully connected network. Parameters "l<i>.W" (fan_in x fan_out) and
/// "l<i>.b" (1 x fan_out); no activation after the last layer.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    if (spec_.input_dim == 0 || spec_.output_dim == 0) throw ConfigError("mlp dimensions must be positive");
    for (auto h : spec_.hidden)
      if (h == 0) throw ConfigError("mlp hidden widths must be positive");
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return spec_.hidden.size() + 1; }

  void init_params(ParamStore& ps, Rng& rng, const std::string& prefix = "") const {
    std::size_t fan_in = spec_.input_dim;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const bool last = l + 1 == num_layers();
      const std::size_t fan_out = last ? spec_.output_dim : spec_.hidden[l];
      const double stddev = (last ? spec_.final_init_scale : 1.0) / std::sqrt(static_cast<double>(fan_in));
      Tensor w(fan_in, fan_out, 0.0);
      if (stddev != 0.0) w = rng.normal_tensor(fan_in, fan_out, stddev);
      ps.add(prefix + "l" + std::to_string(l) + ".W", std::move(w));
      ps.add(prefix + "l" + std::to_string(l) + ".b", Tensor(1, fan_out, 0.0));
      fan_in = fan_out;
    }
  }

  Var forward(Tape& tape, const Bound& p, Var x, const std::string& prefix = "") const {
    if (tape.value(x).cols() != spec_.input_dim)
      throw ConfigError("mlp input width " + std::to_string(tape.value(x).cols()) + ", expected " +
                        std::to_string(spec_.input_dim));
    Var h = x;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::string n = prefix + "l" + std::to_string(l);
      h = tape.add(tape.matmul(h, p[n + ".W"]), p[n + ".b"]);
      if (l + 1 < num_layers()) h = activate(tape, h);
    }
    return h;
  }

 private:
  Var activate(Tape& tape, Var h) const {
    switch (spec_.activation) {
      case Activation::tanh: return tape.tanh(h);
      case Activation::softplus: return tape.softplus(h);
      case Activation::relu: return tape.relu(h);
    }
    return h;
  }

  MlpSpec spec_;
};

/// Fourier time features [sin(2^k pi t), cos(2^k pi t)] for k < num_frequencies.
struct TimeEmbedding {
  std::size_t num_frequencies = 8;

  std::size_t width() const { return 2 * num_frequencies; }

  Tensor embed(std::span<const double> t) const {
    Tensor out(t.size(), width());
    for (std::size_t i = 0; i < t.size(); ++i) {
      double freq = std::numbers::pi;
      for (std::size_t k = 0; k < num_frequencies; ++k, freq *= 2.0) {
        out(i, 2 * k) = std::sin(freq * t[i]);
        out(i, 2 * k + 1) = std::cos(freq * t[i]);
      }
    }
    return out;
  }
};

inline void check_unit_interval(std::span<const double> t, const char* what) {
  for (double v : t)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + ": t=" + std::to_string(v) + " outside [0,1]");
}

struct ConsistencyNetSpec {
  std::size_t dim = 2;
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::tanh;
  std::size_t num_frequencies = 8;
  double final_init_scale = 0.0;
};

/// Time-conditioned map f_t(x) = x + (1 - t) * trunk(x, embed(t)). The skip
/// form makes f_1 the identity for every parameter value.
class ConsistencyNet {
 public:
  ConsistencyNet() = default;
  ConsistencyNet(const ConsistencyNetSpec& spec, Rng& rng)
      : spec_(spec),
        embedding_{spec.num_frequencies},
        trunk_(MlpSpec{spec.dim + 2 * spec.num_frequencies, spec.dim, spec.hidden, spec.activation,
                       spec.final_init_scale}) {
    trunk_.init_params(params_, rng);
  }

  const ConsistencyNetSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.dim; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const TimeEmbedding& embedding() const { return embedding_; }

  /// Per-row times `t` (one entry per row of x).
  Var forward(Tape& tape, const Bound& p, Var x, std::span<const double> t) const {
    const Tensor& xv = tape.value(x);
    if (xv.cols() != spec_.dim)
      throw ConfigError("consistency net: input width " + std::to_string(xv.cols()) + ", expected " +
                        std::to_string(spec_.dim));
    if (t.size() != xv.rows()) throw ConfigError("consistency net: one time value per row required");
    check_unit_interval(t, "consistency_forward");
    Var features = tape.concat_cols(x, tape.constant(embedding_.embed(t)));
    Var correction = trunk(tape, p, features);
    Tensor gate(t.size(), 1);
    for (std::size_t i = 0; i < t.size(); ++i) gate[i] = 1.0 - t[i];
    return tape.add(x, tape.mul(correction, tape.constant(std::move(gate))));
  }

  /// Trunk output alone, for checking the composition.
  Var trunk(Tape& tape, const Bound& p, Var features) const { return trunk_.forward(tape, p, features); }

  Tensor evaluate(const Tensor& x, std::span<const double> t) const {
    Tape tape;
    Bound p = tape.bind_frozen(params_);
    return tape.value(forward(tape, p, tape.constant(x), t));
  }

  Tensor evaluate(const Tensor& x, double t) const {
    std::vector<double> ts(x.rows(), t);
    return evaluate(x, ts);
  }

 private:
  ConsistencyNetSpec spec_;
  TimeEmbedding embedding_;
  Mlp trunk_;
  ParamStore params_;
};

enum class GeneratorMode { unconstrained_mlp, linear_map, weakly_supervised };

inline std::string to_string(GeneratorMode m) {
  switch (m) {
    case GeneratorMode::unconstrained_mlp: return "unconstrained-mlp";
    case GeneratorMode::linear_map: return "linear-map";
    case GeneratorMode::weakly_supervised: return "weakly-supervised";
  }
  return "?";
}

inline GeneratorMode parse_generator_mode(const std::string& s) {
  if (s == "unconstrained-mlp") return GeneratorMode::unconstrained_mlp;
  if (s == "linear-map") return GeneratorMode::linear_map;
  if (s == "weakly-supervised") return GeneratorMode::weakly_supervised;
  throw ConfigError("unknown generator mode '" + s +
                    "' (expected unconstrained-mlp, linear-map or weakly-supervised)");
}

/// Anchor pairs for weak supervision: row i of `z` should map to row i of `x`.
struct PairedSet {
  Tensor z;
  Tensor x;
  std::size_t size() const { return z.rows(); }
};

struct GeneratorSpec {
  GeneratorMode mode = GeneratorMode::unconstrained_mlp;
  std::size_t input_dim = 2;
  std::size_t output_dim = 2;
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::tanh;
  double final_init_scale = 1.0;
};

/// The constrained map g: R^D -> R^N. In linear-map mode the only
/// parameter is "A" (N x D) and the forward pass is z A^T, nothing else.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorSpec& spec, Rng& rng, std::optional<PairedSet> pairs = std::nullopt)
      : spec_(spec), pairs_(std::move(pairs)) {
    if (spec_.input_dim == 0 || spec_.output_dim == 0) throw ConfigError("generator dimensions must be positive");
    if (spec_.mode == GeneratorMode::weakly_supervised) {
      if (!pairs_ || pairs_->size() == 0)
        throw ConfigError("weakly-supervised generator requires a nonempty paired set");
      if (pairs_->z.cols() != spec_.input_dim || pairs_->x.cols() != spec_.output_dim ||
          pairs_->x.rows() != pairs_->z.rows())
        throw ConfigError("paired set shapes do not match generator dimensions");
    }
    if (spec_.mode == GeneratorMode::linear_map) {
      const double stddev = spec_.final_init_scale / std::sqrt(static_cast<double>(spec_.input_dim));
      Tensor a(spec_.output_dim, spec_.input_dim, 0.0);
      if (stddev != 0.0) a = rng.normal_tensor(spec_.output_dim, spec_.input_dim, stddev);
      params_.add("A", std::move(a));
    } else {
      mlp_ = Mlp(MlpSpec{spec_.input_dim, spec_.output_dim, spec_.hidden, spec_.activation, spec_.final_init_scale});
      mlp_.init_params(params_, rng);
    }
  }

  const GeneratorSpec& spec() const { return spec_; }
  GeneratorMode mode() const { return spec_.mode; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t output_dim() const { return spec_.output_dim; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::optional<PairedSet>& paired_set() const { return pairs_; }

  Var forward(Tape& tape, const Bound& p, Var z) const {
    if (tape.value(z).cols() != spec_.input_dim)
      throw ConfigError("generator: input width " + std::to_string(tape.value(z).cols()) + ", expected " +
                        std::to_string(spec_.input_dim));
    if (spec_.mode == GeneratorMode::linear_map) return tape.matmul_nt(z, p["A"]);
    return mlp_.forward(tape, p, z);
  }

  Tensor evaluate(const Tensor& z) const {
    Tape tape;
    Bound p = tape.bind_frozen(params_);
    return tape.value(forward(tape, p, tape.constant(z)));
  }

  /// weight * mean_i ||g(z_i) - x_i||^2 over the anchor pairs.
  Var paired_penalty(Tape& tape, const Bound& p, double weight) const {
    if (!pairs_ || pairs_->size() == 0) throw ConfigError("paired_penalty: generator has no paired set");
    Var out = forward(tape, p, tape.constant(pairs_->z));
    return tape.scale(tape.mean_sqnorm(tape.sub(out, tape.constant(pairs_->x))), weight);
  }

  double paired_penalty_value(double weight) const {
    Tape tape;
    Bound p = tape.bind_frozen(params_);
    return tape.value(paired_penalty(tape, p, weight)).item();
  }

 private:
  GeneratorSpec spec_;
  std::optional<PairedSet> pairs_;
  Mlp mlp_;
  ParamStore params_;
};

}  // namespace fdm
