// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fdm/adam.hpp"
#include "fdm/autodiff.hpp"
#include "fdm/config.hpp"
#include "fdm/coupling.hpp"
#include "fdm/data.hpp"
#include "fdm/interpolants.hpp"
#include "fdm/metrics.hpp"
#include "fdm/networks.hpp"

namespace fdm {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Source endpoints x0 and target endpoints x1, row-aligned by a coupling.
struct CoupledBatch {
  Tensor x0;
  Tensor x1;
};

/// Pairs `source` rows with `target` rows under the chosen coupling.
inline CoupledBatch couple(const Tensor& source, const Tensor& target, CouplingKind kind, Rng& rng,
                           std::size_t ot_max_batch = 512) {
  const CouplingPlan plan =
      kind == CouplingKind::ot ? ot_pairs(source, target, ot_max_batch) : independent_pairs(source, target, rng);
  return {source, apply_plan(target, plan)};
}

/// Mean over the batch of ||f_t(x~_t) - f-_{t+dt}(x~_t + dJ_t dt)||^2 with
/// x~_t = J_t(x0, x1). Only `f_params` (bound trainably by the caller)
/// receives gradient; the f- branch and the interpolation are constants.
inline Var consistency_loss(Tape& tape, const ConsistencyNet& f, const Bound& f_params, const ConsistencyNet& f_minus,
                            const CoupledBatch& pairs, std::span<const double> t, double dt,
                            const InterpolantSpec& spec) {
  require_same_shape(pairs.x0, pairs.x1, "consistency_loss");
  if (t.size() != pairs.x0.rows()) throw ConfigError("consistency_loss: one time value per pair required");
  if (!(dt > 0.0)) throw DomainError("consistency_loss: dt must be positive");
  std::vector<double> t_next(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double tn = t[i] + dt;
    if (!(t[i] >= 0.0) || tn > 1.0 + 1e-12)
      throw DomainError("consistency_loss: t + dt = " + std::to_string(tn) + " exceeds 1");
    t_next[i] = std::min(tn, 1.0);
  }
  const Tensor x_t = interpolate(spec, pairs.x0, pairs.x1, t);
  Tensor x_step = x_t;
  const std::size_t d = x_t.cols();
  for (std::size_t r = 0; r < x_t.rows(); ++r) {
    // time_derivative is constant in t for both path kinds; evaluate per row
    // for generality.
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t i = r * d + k;
      const double v = spec.kind == InterpolantKind::linear ? pairs.x1[i] - pairs.x0[i] : spec.sigma_dot() * pairs.x0[i];
      x_step[i] += v * dt;
    }
  }
  const Bound frozen = tape.bind_frozen(f_minus.params());
  const Var target = f_minus.forward(tape, frozen, tape.constant(x_step), t_next);
  const Var pred = f.forward(tape, f_params, tape.constant(x_t), t);
  return tape.mean_sqnorm(tape.sub(pred, target));
}

inline double consistency_loss_value(const ConsistencyNet& f, const ConsistencyNet& f_minus, const CoupledBatch& pairs,
                                     std::span<const double> t, double dt, const InterpolantSpec& spec) {
  Tape tape;
  const Bound p = tape.bind_frozen(f.params());
  return tape.value(consistency_loss(tape, f, p, f_minus, pairs, t, dt, spec)).item();
}

/// Mean over the batch of ||g(z) - f-_0(g-(z))||^2; only `g_params`
/// receives gradient.
inline Var generator_loss(Tape& tape, const Generator& g, const Bound& g_params, const Generator& g_minus,
                          const ConsistencyNet& f0_minus, const Tensor& z) {
  const Tensor gz_frozen = g_minus.evaluate(z);
  const std::vector<double> zeros(z.rows(), 0.0);
  const Tensor target = f0_minus.evaluate(gz_frozen, zeros);
  const Var out = g.forward(tape, g_params, tape.constant(z));
  return tape.mean_sqnorm(tape.sub(out, tape.constant(target)));
}

inline double generator_loss_value(const Generator& g, const Generator& g_minus, const ConsistencyNet& f0_minus,
                                   const Tensor& z) {
  Tape tape;
  const Bound p = tape.bind_frozen(g.params());
  return tape.value(generator_loss(tape, g, p, g_minus, f0_minus, z)).item();
}

/// Times drawn uniformly from the grid {0, dt, ..., 1 - dt}.
inline std::vector<double> sample_time_grid(std::size_t n, std::size_t n_times, Rng& rng) {
  std::vector<double> t(n);
  for (auto& v : t) v = static_cast<double>(rng.below(n_times)) / static_cast<double>(n_times);
  return t;
}

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

/// Full training state at an outer-iteration boundary.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  TrainConfig config;
  std::uint64_t outer_iter = 0;
  Rng rng;
  ConsistencyNet f;
  std::optional<Generator> g;  // absent in gcm mode
  AdamState adam_f;
  AdamState adam_g;
  std::optional<ConsistencyNet> f_ema;  // present when ema_decay > 0
};

struct MetricsRow {
  std::uint64_t outer_iter = 0;
  double consistency_loss = 0.0;
  double generator_loss = 0.0;
  std::optional<double> mmd;
  std::optional<double> sliced_w;
};

inline std::string metrics_csv_header() { return "outer_iter,consistency_loss,generator_loss,mmd,sliced_w\n"; }

inline std::string metrics_csv_row(const MetricsRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return std::to_string(r.outer_iter) + "," + format_double(r.consistency_loss) + "," +
         format_double(r.generator_loss) + "," + opt(r.mmd) + "," + opt(r.sliced_w) + "\n";
}

/// Anchor pairs for weak supervision, resolved from the config.
inline std::optional<PairedSet> resolve_pairs(const TrainConfig& c, const Dataset& source, const Dataset& target) {
  if (c.generator.mode != GeneratorMode::weakly_supervised) return std::nullopt;
  if (c.pairs) return c.pairs;
  if (c.anchors.count == 0) throw ConfigError("weakly-supervised generator needs anchors or pairs");
  Rng rng(c.anchors.seed);
  Tensor z = source.sample(c.anchors.count, rng);
  Tensor x = target.sample(c.anchors.count, rng);
  if (z.cols() == x.cols()) x = apply_plan(x, ot_pairs(z, x, c.anchors.count));
  return PairedSet{std::move(z), std::move(x)};
}

inline ConsistencyNetSpec consistency_spec(const TrainConfig& c, std::size_t dim) {
  ConsistencyNetSpec s = c.consistency;
  s.dim = dim;
  return s;
}

/// Network and optimizer initialization, a pure function of the config.
inline Checkpoint initial_state(const TrainConfig& c, const Dataset& source, const Dataset& target) {
  Rng root(c.seed);
  Rng init_f = root.fork(1);
  Rng init_g = root.fork(2);
  Checkpoint ck;
  ck.config = c;
  ck.rng = root.fork(3);
  ck.f = ConsistencyNet(consistency_spec(c, target.dim()), init_f);
  ck.adam_f = make_adam_state(ck.f.params(), c.optimizer_f);
  if (c.mode == TrainMode::fdm) {
    ck.g = Generator(c.generator, init_g, resolve_pairs(c, source, target));
    ck.adam_g = make_adam_state(ck.g->params(), c.optimizer_g);
  }
  if (c.ema_decay > 0.0) ck.f_ema = ck.f;
  return ck;
}

/// Dataset construction plus the checks that can only run once files are read.
inline std::pair<Dataset, Dataset> resolve_datasets(const TrainConfig& c) {
  Dataset source(c.source), target(c.target);
  if (c.mode == TrainMode::fdm) {
    if (c.generator.input_dim != source.dim())
      throw ConfigError("generator.input_dim = " + std::to_string(c.generator.input_dim) + " but source dimension is " +
                        std::to_string(source.dim()));
    if (c.generator.output_dim != target.dim())
      throw ConfigError("generator.output_dim = " + std::to_string(c.generator.output_dim) +
                        " but target dimension is " + std::to_string(target.dim()));
  } else if (source.dim() != target.dim()) {
    throw ConfigError("gcm mode needs source and target of equal dimension (" + std::to_string(source.dim()) + " vs " +
                      std::to_string(target.dim()) + ")");
  }
  return {std::move(source), std::move(target)};
}

template <class Net>
void ema_update(Net& shadow, const Net& live, double decay) {
  auto& s = shadow.params().entries();
  const auto& l = live.params().entries();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < s[i].value.size(); ++k)
      s[i].value[k] = decay * s[i].value[k] + (1.0 - decay) * l[i].value[k];
}

struct TrainOptions {
  std::string checkpoint_path;  // empty: no files
  std::string metrics_path;
  std::function<void(const MetricsRow&)> on_metrics;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path);

namespace detail {

inline void guard(double loss, double threshold, const char* what, std::uint64_t iter) {
  if (!std::isfinite(loss) || loss > threshold)
    throw NumericalDivergence(std::string("numerical divergence in ") + what + " at outer iteration " +
                              std::to_string(iter) + " (loss " + std::to_string(loss) + ")");
}

/// Pushforward samples used for evaluation: g(z) in fdm mode, f_0(x0) in gcm.
inline Tensor evaluation_samples(const Checkpoint& ck, const Tensor& source) {
  if (ck.g) return ck.g->evaluate(source);
  return ck.f.evaluate(source, 0.0);
}

inline void evaluate_into(const Checkpoint& ck, const Dataset& source, const Dataset& target, MetricsRow& row) {
  const auto& c = ck.config;
  Rng rng = Rng(c.seed).fork(1'000'000 + row.outer_iter);
  const Tensor z = source.sample(c.eval_samples, rng);
  const Tensor x = target.sample(c.eval_samples, rng);
  const Tensor out = evaluation_samples(ck, z);
  row.mmd = mmd(out, x);
  row.sliced_w = sliced_wasserstein(out, x, c.eval_projections, c.seed + row.outer_iter);
}

/// One f-phase or gcm step: fresh batches, fresh coupling, one Adam update.
inline double consistency_step(Checkpoint& ck, const ConsistencyNet& f_minus, const Generator* g_minus,
                               const Dataset& source, const Dataset& target) {
  const auto& c = ck.config;
  Tensor x0 = source.sample(c.batch_size, ck.rng);
  if (g_minus) x0 = g_minus->evaluate(x0);
  Tensor x1 = c.shared_batches && !g_minus ? x0 : target.sample(c.batch_size, ck.rng);
  const CoupledBatch pairs = couple(x0, x1, c.coupling, ck.rng, c.ot_max_batch);
  const auto t = sample_time_grid(c.batch_size, c.n_times, ck.rng);
  const double loss = forward_backward([&](Tape& tape) {
    const Bound p = tape.bind(ck.f.params());
    return consistency_loss(tape, ck.f, p, f_minus, pairs, t, c.dt(), c.interpolant);
  });
  adam_step(ck.f.params(), ck.adam_f);
  if (ck.f_ema) ema_update(*ck.f_ema, ck.f, c.ema_decay);
  return loss;
}

inline double generator_step(Checkpoint& ck, const Generator& g_minus, const ConsistencyNet& f_minus,
                             const Dataset& source) {
  const auto& c = ck.config;
  const Tensor z = source.sample(c.batch_size, ck.rng);
  double gen = 0.0;
  forward_backward([&](Tape& tape) {
    const Bound p = tape.bind(ck.g->params());
    Var loss = generator_loss(tape, *ck.g, p, g_minus, f_minus, z);
    gen = tape.value(loss).item();
    if (ck.g->mode() == GeneratorMode::weakly_supervised)
      loss = tape.add(loss, ck.g->paired_penalty(tape, p, c.penalty_weight));
    return loss;
  });
  adam_step(ck.g->params(), ck.adam_g);
  return gen;
}

inline TrainResult run_training(Checkpoint ck, const Dataset& source, const Dataset& target,
                                const TrainOptions& opts) {
  const TrainConfig& c = ck.config;
  TrainResult result;
  std::ofstream metrics_out;
  if (!opts.metrics_path.empty()) {
    metrics_out.open(opts.metrics_path, std::ios::binary | std::ios::trunc);
    if (!metrics_out) throw IoError("cannot write metrics log '" + opts.metrics_path + "'");
    metrics_out << metrics_csv_header() << std::flush;
  }

  Checkpoint last_good = ck;
  try {
    while (ck.outer_iter < c.outer_iters) {
      MetricsRow row;
      row.outer_iter = ck.outer_iter + 1;

      // Phase 1: consistency network against frozen f-, g-.
      {
        const ConsistencyNet f_copy = ck.f;
        std::optional<Generator> g_copy = ck.g;
        double acc = 0.0;
        for (std::size_t s = 0; s < c.t_f; ++s) {
          const ConsistencyNet& f_minus = ck.f_ema ? *ck.f_ema : f_copy;
          const Generator* g_minus = ck.g ? &*g_copy : nullptr;
          const double l = consistency_step(ck, f_minus, g_minus, source, target);
          guard(l, c.divergence_threshold, "consistency loss", row.outer_iter);
          acc += l;
        }
        row.consistency_loss = acc / static_cast<double>(c.t_f);
      }

      // Phase 2: generator against refreshed frozen copies.
      if (ck.g) {
        const ConsistencyNet f_copy = ck.f;
        const Generator g_copy = *ck.g;
        double acc = 0.0;
        for (std::size_t s = 0; s < c.t_g; ++s) {
          const ConsistencyNet& f_minus = ck.f_ema ? *ck.f_ema : f_copy;
          const Generator& g_minus = g_copy;
          const double l = generator_step(ck, g_minus, f_minus, source);
          guard(l, c.divergence_threshold, "generator loss", row.outer_iter);
          acc += l;
        }
        row.generator_loss = acc / static_cast<double>(c.t_g);
      }

      ++ck.outer_iter;
      const bool last = ck.outer_iter == c.outer_iters;
      if ((c.eval_interval > 0 && ck.outer_iter % c.eval_interval == 0) || last)
        evaluate_into(ck, source, target, row);

      result.metrics.push_back(row);
      if (metrics_out.is_open()) metrics_out << metrics_csv_row(row) << std::flush;
      if (opts.on_metrics) opts.on_metrics(row);
      last_good = ck;
      if (!opts.checkpoint_path.empty() && c.checkpoint_interval > 0 && ck.outer_iter % c.checkpoint_interval == 0 &&
          !last)
        save_checkpoint(ck, opts.checkpoint_path);
    }
  } catch (const NumericalDivergence&) {
    if (!opts.checkpoint_path.empty()) save_checkpoint(last_good, opts.checkpoint_path);
    throw;
  }
  if (!opts.checkpoint_path.empty()) save_checkpoint(ck, opts.checkpoint_path);
  result.checkpoint = std::move(ck);
  return result;
}

}  // namespace detail

/// Alternating FDM training: each outer iteration runs t_f Adam steps on the
/// consistency loss, then t_g steps on the generator loss (plus the anchor
/// penalty in weakly-supervised mode). Passing `resume` continues from a
/// saved state; the result is bit-identical to an uninterrupted run.
inline TrainResult fdm_train(const TrainConfig& config, const TrainOptions& opts = {},
                             std::optional<Checkpoint> resume = std::nullopt) {
  if (config.mode != TrainMode::fdm) throw ConfigError("fdm_train: config mode must be fdm");
  if (config.t_f == 0) throw ConfigError("training.t_f must be >= 1");
  if (config.t_g == 0) throw ConfigError("training.t_g must be >= 1");
  if (config.interpolant.kind != InterpolantKind::linear)
    throw ConfigError("fdm_train: only the linear interpolant pairs generator outputs with targets");
  auto [source, target] = resolve_datasets(config);
  Checkpoint ck = resume ? std::move(*resume) : initial_state(config, source, target);
  if (resume) ck.config.outer_iters = config.outer_iters;
  return detail::run_training(std::move(ck), source, target, opts);
}

/// Consistency-only training on a fixed pair of datasets (no generator):
/// outer_iters phases of t_f steps against the same f- target as fdm_train.
inline TrainResult gcm_train(const TrainConfig& config, const TrainOptions& opts = {},
                             std::optional<Checkpoint> resume = std::nullopt) {
  TrainConfig c = config;
  c.mode = TrainMode::gcm;
  if (c.t_f == 0) throw ConfigError("training.t_f must be >= 1");
  auto [source, target] = resolve_datasets(c);
  Checkpoint ck = resume ? std::move(*resume) : initial_state(c, source, target);
  if (resume) ck.config.outer_iters = c.outer_iters;
  return detail::run_training(std::move(ck), source, target, opts);
}

inline TrainResult train(const TrainConfig& config, const TrainOptions& opts = {},
                         std::optional<Checkpoint> resume = std::nullopt) {
  return config.mode == TrainMode::fdm ? fdm_train(config, opts, std::move(resume))
                                       : gcm_train(config, opts, std::move(resume));
}

}  // namespace fdm

#include "fdm/checkpoint.hpp"
