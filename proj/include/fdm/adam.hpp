// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fdm/param_store.hpp"

namespace fdm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState make_adam_state(const ParamStore& params, AdamConfig config = {}) {
  AdamState s{config, 0, {}, {}};
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.shape(), 0.0);
    s.v.emplace_back(e.value.shape(), 0.0);
  }
  return s;
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
inline void adam_step(ParamStore& params, AdamState& state) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size())
    throw ConfigError("adam_step: optimizer state has " + std::to_string(state.m.size()) +
                      " moments for " + std::to_string(entries.size()) + " parameters");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].shape() != entries[i].value.shape() || state.v[i].shape() != entries[i].value.shape())
      throw ConfigError("adam_step: moment shape mismatch for '" + entries[i].name + "'");
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double g = e.grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      e.value[k] -= c.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + c.eps);
    }
  }
  params.zero_grad();
}

}  // namespace fdm
