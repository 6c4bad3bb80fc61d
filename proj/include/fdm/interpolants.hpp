// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>

#include "fdm/tensor.hpp"

namespace fdm {

enum class InterpolantKind { linear, ve };

inline std::string to_string(InterpolantKind k) { return k == InterpolantKind::linear ? "linear" : "ve"; }

inline InterpolantKind parse_interpolant_kind(const std::string& s) {
  if (s == "linear") return InterpolantKind::linear;
  if (s == "ve") return InterpolantKind::ve;
  throw ConfigError("unknown interpolant kind '" + s + "' (expected linear or ve)");
}

/// Path between coupled endpoints.
///
/// linear: J_t(x0, x1) = (1 - t) x0 + t x1.
/// ve:     J_t(eps, x1) = x1 + sigma(t) eps with sigma(t) = sigma_max (1 - t);
///         the first endpoint plays the role of the standard-normal noise.
struct InterpolantSpec {
  InterpolantKind kind = InterpolantKind::linear;
  double sigma_max = 10.0;

  double sigma(double t) const { return sigma_max * (1.0 - t); }
  double sigma_dot() const { return -sigma_max; }
};

/// Per-sample empirical vector field (or score) at the interpolated points.
struct EmpiricalVF {
  Tensor value;
};

inline void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(what) + ": t=" + std::to_string(t) + " outside [0,1]");
}

/// J_t per row, with one time value per row.
inline Tensor interpolate(const InterpolantSpec& spec, const Tensor& x0, const Tensor& x1,
                          std::span<const double> t) {
  require_same_shape(x0, x1, "interpolate");
  if (t.size() != x0.rows()) throw ConfigError("interpolate: one time value per row required");
  Tensor out(x0.shape());
  const std::size_t d = x0.cols();
  for (std::size_t r = 0; r < x0.rows(); ++r) {
    check_time(t[r], "interpolate");
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t i = r * d + k;
      if (spec.kind == InterpolantKind::linear) {
        // Written so that t=0 and t=1 reproduce the endpoints bitwise.
        out[i] = t[r] == 1.0 ? x1[i] : (1.0 - t[r]) * x0[i] + t[r] * x1[i];
      } else {
        out[i] = x1[i] + spec.sigma(t[r]) * x0[i];
      }
    }
  }
  return out;
}

inline Tensor interpolate(const InterpolantSpec& spec, const Tensor& x0, const Tensor& x1, double t) {
  std::vector<double> ts(x0.rows(), t);
  return interpolate(spec, x0, x1, ts);
}

/// d/dt J_t(x0, x1). Linear: x1 - x0 for every t. VE: sigma'(t) eps.
inline EmpiricalVF time_derivative(const InterpolantSpec& spec, const Tensor& x0, const Tensor& x1, double t) {
  require_same_shape(x0, x1, "time_derivative");
  check_time(t, "time_derivative");
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = spec.kind == InterpolantKind::linear ? x1[i] - x0[i] : spec.sigma_dot() * x0[i];
  return {std::move(out)};
}

struct VePerturbation {
  Tensor noisy;
  EmpiricalVF score_hat;
};

/// x~_t = x1 + sigma(t) eps and the single-sample estimate
/// (x~_t - x1) / sigma(t)^2 = eps / sigma(t). Undefined at t = 1.
inline VePerturbation ve_perturb(const InterpolantSpec& spec, const Tensor& x1, const Tensor& eps, double t) {
  if (spec.kind != InterpolantKind::ve) throw ConfigError("ve_perturb requires a ve interpolant");
  require_same_shape(x1, eps, "ve_perturb");
  check_time(t, "ve_perturb");
  const double s = spec.sigma(t);
  if (!(s > 0.0)) throw DomainError("ve_perturb: sigma(t) = 0 at t=" + std::to_string(t) + "; exclude the endpoint");
  Tensor noisy(x1.shape()), score(x1.shape());
  for (std::size_t i = 0; i < x1.size(); ++i) {
    noisy[i] = x1[i] + s * eps[i];
    score[i] = (noisy[i] - x1[i]) / (s * s);
  }
  return {std::move(noisy), {std::move(score)}};
}

using VectorField = std::function<Tensor(double t, const Tensor& x)>;

/// Explicit Euler from t=0 to t=1 with step 1/n_steps.
inline Tensor integrate_trajectory(const VectorField& field, const Tensor& x0, std::size_t n_steps) {
  if (n_steps == 0) throw ConfigError("integrate_trajectory: n_steps must be >= 1");
  const double dt = 1.0 / static_cast<double>(n_steps);
  Tensor x = x0;
  for (std::size_t s = 0; s < n_steps; ++s) {
    const double t = static_cast<double>(s) * dt;
    Tensor v = field(t, x);
    require_same_shape(x, v, "integrate_trajectory");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
    if (!x.all_finite())
      throw NumericalDivergence("integrate_trajectory: non-finite state at step " + std::to_string(s));
  }
  return x;
}

}  // namespace fdm
