// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fdm/fdm.hpp"

using namespace fdm;

namespace {
const InterpolantSpec kLinear{InterpolantKind::linear, 10.0};
const InterpolantSpec kVe{InterpolantKind::ve, 10.0};
}  // namespace

TEST(Interpolate, EndpointsBitwise) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Tensor x0 = rng.normal_tensor(5, 3, 10.0), x1 = rng.normal_tensor(5, 3, 10.0);
    EXPECT_EQ(interpolate(kLinear, x0, x1, 0.0), x0);
    EXPECT_EQ(interpolate(kLinear, x0, x1, 1.0), x1);
  }
}

TEST(Interpolate, HandValues) {
  EXPECT_EQ(interpolate(kLinear, Tensor::from_rows({{0, 0}}), Tensor::from_rows({{2, 2}}), 0.5),
            Tensor::from_rows({{1, 1}}));
  EXPECT_EQ(interpolate(kLinear, Tensor::from_rows({{1, -1}}), Tensor::from_rows({{3, 1}}), 0.25),
            Tensor::from_rows({{1.5, -0.5}}));
}

TEST(Interpolate, PerRowTimes) {
  const Tensor x0 = Tensor::from_rows({{0}, {0}}), x1 = Tensor::from_rows({{4}, {8}});
  const std::vector<double> t{0.25, 0.5};
  EXPECT_EQ(interpolate(kLinear, x0, x1, t), Tensor::from_rows({{1}, {4}}));
}

TEST(Interpolate, Errors) {
  EXPECT_THROW(interpolate(kLinear, Tensor(2, 2), Tensor(2, 3), 0.5), ConfigError);
  EXPECT_THROW(interpolate(kLinear, Tensor(2, 2), Tensor(2, 2), 1.5), DomainError);
}

TEST(TimeDerivative, LinearValues) {
  const Tensor x = Tensor::from_rows({{1, 2}, {3, 4}});
  const auto zero = time_derivative(kLinear, x, x, 0.3).value;
  for (double v : zero.raw()) EXPECT_EQ(v, 0.0);
  for (double t : {0.0, 0.4, 1.0})
    EXPECT_EQ(time_derivative(kLinear, Tensor::from_rows({{0, 0}}), Tensor::from_rows({{2, 2}}), t).value,
              Tensor::from_rows({{2, 2}}));
}

TEST(TimeDerivative, MatchesCentralDifferences) {
  Rng rng(2);
  const double h = 1e-6;
  for (const auto& spec : {kLinear, kVe}) {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Tensor x0 = rng.normal_tensor(3, 2), x1 = rng.normal_tensor(3, 2);
      const double t = h + (1.0 - 2 * h) * rng.uniform();
      const Tensor up = interpolate(spec, x0, x1, t + h), down = interpolate(spec, x0, x1, t - h);
      const Tensor analytic = time_derivative(spec, x0, x1, t).value;
      for (std::size_t k = 0; k < analytic.size(); ++k)
        worst = std::max(worst, std::abs((up[k] - down[k]) / (2 * h) - analytic[k]) / (1.0 + std::abs(analytic[k])));
    }
    EXPECT_LT(worst, 1e-8) << to_string(spec.kind);
  }
}

TEST(VeSchedule, MonotoneWithZeroEnd) {
  EXPECT_EQ(kVe.sigma(1.0), 0.0);
  EXPECT_EQ(kVe.sigma(0.0), 10.0);
  double prev = kVe.sigma(0.0);
  for (int i = 1; i <= 100; ++i) {
    const double s = kVe.sigma(i / 100.0);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(VePerturb, HandValues) {
  // sigma(t) = 2 at t = 0.8 with sigma_max = 10.
  const auto r = ve_perturb(kVe, Tensor::from_rows({{0}}), Tensor::from_rows({{1}}), 0.8);
  EXPECT_NEAR(r.noisy[0], 2.0, 1e-12);
  EXPECT_NEAR(r.score_hat.value[0], 0.5, 1e-12);
  const auto z = ve_perturb(kVe, Tensor::from_rows({{3, 4}}), Tensor(1, 2, 0.0), 0.3);
  EXPECT_EQ(z.noisy, Tensor::from_rows({{3, 4}}));
  EXPECT_EQ(z.score_hat.value, Tensor(1, 2, 0.0));
}

TEST(VePerturb, ScoreIsEpsOverSigma) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double t = 0.99 * rng.uniform();
    const Tensor x1 = rng.normal_tensor(4, 2), eps = rng.normal_tensor(4, 2);
    const auto r = ve_perturb(kVe, x1, eps, t);
    for (std::size_t k = 0; k < eps.size(); ++k)
      EXPECT_NEAR(r.score_hat.value[k], eps[k] / kVe.sigma(t), 1e-12 * (1 + std::abs(eps[k] / kVe.sigma(t))));
  }
}

TEST(VePerturb, EndpointIsSingular) {
  EXPECT_THROW(ve_perturb(kVe, Tensor(1, 1), Tensor(1, 1), 1.0), DomainError);
  EXPECT_THROW(ve_perturb(kLinear, Tensor(1, 1), Tensor(1, 1), 0.5), ConfigError);
}

TEST(VePerturb, VarianceMatchesSchedule) {
  Rng rng(4);
  const std::size_t n = 100000;
  const double t = 0.4;
  const Tensor x1 = rng.normal_tensor(n, 1), eps = rng.normal_tensor(n, 1);
  const auto r = ve_perturb(kVe, x1, eps, t);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = r.noisy[i] - x1[i];
    s += d;
    s2 += d * d;
  }
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (kVe.sigma(t) * kVe.sigma(t)), 1.0, 0.05);
}

TEST(Euler, ZeroFieldKeepsStart) {
  const Tensor x0 = Tensor::from_rows({{1, 2}});
  EXPECT_EQ(integrate_trajectory([](double, const Tensor& x) { return Tensor(x.shape(), 0.0); }, x0, 17), x0);
}

TEST(Euler, ConstantFieldExact) {
  for (std::size_t n : {1u, 3u, 64u}) {
    const Tensor x = integrate_trajectory([](double, const Tensor&) { return Tensor::from_rows({{1, 0}}); },
                                          Tensor::from_rows({{0, 0}}), n);
    EXPECT_NEAR(x[0], 1.0, 1e-12);
    EXPECT_EQ(x[1], 0.0);
  }
}

TEST(Euler, PairwiseFieldLandsOnTarget) {
  Rng rng(5);
  for (std::size_t n : {1u, 7u, 100u, 1000u}) {
    const Tensor x0 = rng.normal_tensor(6, 3), x1 = rng.normal_tensor(6, 3);
    const Tensor v = time_derivative(kLinear, x0, x1, 0.0).value;
    const Tensor end = integrate_trajectory([&](double, const Tensor&) { return v; }, x0, n);
    EXPECT_LT(max_abs_diff(end, x1), 1e-9) << n;
  }
}

TEST(Euler, ExponentialGrowthConvergesFirstOrder) {
  // dx/dt = x from 1: Euler gives (1 + 1/n)^n, error ~ e / (2n).
  auto run = [](std::size_t n) {
    return integrate_trajectory([](double, const Tensor& x) { return x; }, Tensor::scalar(1.0), n)[0];
  };
  const double e = std::numbers::e;
  double prev_err = 1.0;
  for (std::size_t n : {10u, 100u, 1000u, 10000u}) {
    const double err = e - run(n);
    EXPECT_GT(err, 0.0);
    EXPECT_NEAR(err * static_cast<double>(n), e / 2, 0.15);
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
  EXPECT_NEAR(run(100000), 2.71828, 1e-4);
}

TEST(Euler, DivergenceReportsStep) {
  try {
    integrate_trajectory([](double t, const Tensor& x) { return Tensor(x.shape(), t >= 0.5 ? INFINITY : 1.0); },
                         Tensor::scalar(0.0), 10);
    FAIL();
  } catch (const NumericalDivergence& e) {
    EXPECT_NE(std::string(e.what()).find("step 5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(integrate_trajectory([](double, const Tensor& x) { return x; }, Tensor::scalar(1.0), 0), ConfigError);
}
