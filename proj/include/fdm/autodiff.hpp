// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <string>

#include "fdm/param_store.hpp"
#include "fdm/tape.hpp"

namespace fdm {

/// Builds a scalar loss on a fresh tape. The builder binds whatever
/// parameter stores it needs (trainable via Tape::bind, constant via
/// Tape::bind_frozen).
template <class F>
concept LossBuilder = std::invocable<F&, Tape&> && std::same_as<std::invoke_result_t<F&, Tape&>, Var>;

/// Evaluates the loss without recording gradients into any store.
template <LossBuilder F>
double forward_only(F&& build) {
  Tape tape;
  return tape.value(build(tape)).item();
}

/// Runs forward and reverse passes; gradients are accumulated (added) into
/// the bound stores' grad buffers.
template <LossBuilder F>
double forward_backward(F&& build) {
  Tape tape;
  const Var loss = build(tape);
  const double value = tape.value(loss).item();
  if (!std::isfinite(value)) {
    std::string where = tape.first_non_finite();
    throw NumericalDivergence("numerical divergence: non-finite loss" +
                              (where.empty() ? std::string() : ", first produced by " + where));
  }
  tape.backward(loss);
  return value;
}

/// Worst error |a - n| / max(1, |a|, |n|) between analytic gradients and
/// central differences over every scalar in `params`: relative for large
/// components and absolute below 1, where central differences carry about
/// eps * |loss| / h of rounding error.
/// The loss builder must bind `params` trainably.
template <LossBuilder F>
double finite_diff_check(ParamStore& params, F&& build, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check: h must be positive");
  params.zero_grad();
  forward_backward(build);
  double worst = 0.0;
  for (auto& e : params.entries()) {
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double saved = e.value[k];
      e.value[k] = saved + h;
      const double up = forward_only(build);
      e.value[k] = saved - h;
      const double down = forward_only(build);
      e.value[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = e.grad[k];
      const double err = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, std::isnan(err) ? INFINITY : err);
    }
  }
  params.zero_grad();
  return worst;
}

}  // namespace fdm
