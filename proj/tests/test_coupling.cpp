// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fdm/fdm.hpp"

using namespace fdm;

TEST(IndependentPairs, SingleRow) {
  Rng rng(0);
  const auto plan = independent_pairs(Tensor(1, 2), Tensor(1, 2), rng);
  EXPECT_EQ(plan.perm, std::vector<std::size_t>{0});
}

TEST(IndependentPairs, DeterministicBijection) {
  const Tensor a = Rng(1).normal_tensor(4, 2), b = Rng(2).normal_tensor(4, 2);
  Rng r1(7), r2(7);
  const auto p1 = independent_pairs(a, b, r1), p2 = independent_pairs(a, b, r2);
  EXPECT_EQ(p1.perm, p2.perm);
  EXPECT_TRUE(is_permutation_of_range(p1.perm));
  EXPECT_DOUBLE_EQ(p1.cost, plan_cost(a, b, p1.perm));
}

TEST(IndependentPairs, SizeMismatch) {
  Rng rng(0);
  EXPECT_THROW(independent_pairs(Tensor(2, 2), Tensor(3, 2), rng), ConfigError);
}

TEST(OtPairs, SameBatchIsIdentity) {
  const Tensor a = Rng(3).normal_tensor(20, 2);
  const auto plan = ot_pairs(a, a);
  std::vector<std::size_t> id(20);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_EQ(plan.perm, id);
  EXPECT_EQ(plan.cost, 0.0);
}

TEST(OtPairs, SwappedPoints) {
  const auto plan = ot_pairs(Tensor::from_rows({{0, 0}, {1, 0}}), Tensor::from_rows({{1, 0}, {0, 0}}));
  EXPECT_EQ(plan.perm, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(plan.cost, 0.0);
}

TEST(OtPairs, TiesGoLexicographic) {
  // All points coincide: every permutation is optimal, identity is smallest.
  const auto plan = ot_pairs(Tensor(5, 2, 1.0), Tensor(5, 2, 1.0));
  EXPECT_EQ(plan.perm, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  // Two sources at the same place: the lower-index source takes the lower-index target.
  const auto p2 = ot_pairs(Tensor::from_rows({{0}, {0}, {5}}), Tensor::from_rows({{5}, {0}, {0}}));
  EXPECT_EQ(p2.perm, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(OtPairs, Errors) {
  EXPECT_THROW(ot_pairs(Tensor(3, 2), Tensor(2, 2)), ConfigError);
  EXPECT_THROW(ot_pairs(Tensor(3, 2), Tensor(3, 1)), ConfigError);
  EXPECT_THROW(ot_pairs(Tensor(5, 1), Tensor(5, 1), 4), ConfigError);
  EXPECT_TRUE(ot_pairs(Tensor(0, 2), Tensor(0, 2)).perm.empty());
}

TEST(BruteForce, RefusesLargeBatches) { EXPECT_THROW(brute_force_pairs(Tensor(9, 1), Tensor(9, 1)), ConfigError); }

class OtOracle : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OtOracle, MatchesBruteForce) {
  const std::size_t dim = GetParam();
  Rng rng(100 + dim);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t b = 1 + rng.below(7);
    Tensor a = rng.normal_tensor(b, dim), c = rng.normal_tensor(b, dim);
    if (inst % 4 == 0) {
      // Lattice points make exact ties common.
      for (auto& v : a.raw()) v = std::round(v);
      for (auto& v : c.raw()) v = std::round(v);
    }
    const auto ot = ot_pairs(a, c), bf = brute_force_pairs(a, c);
    EXPECT_EQ(ot.cost, bf.cost) << "instance " << inst;
    EXPECT_EQ(ot.perm, bf.perm) << "instance " << inst;
  }
}

INSTANTIATE_TEST_SUITE_P(Dims, OtOracle, ::testing::Values(1u, 2u, 8u));

TEST(OtPairs, NeverWorseThanIndependent) {
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    const std::size_t b = 2 + rng.below(60);
    const Tensor a = rng.normal_tensor(b, 2), c = rng.normal_tensor(b, 2, 2.0);
    EXPECT_LE(ot_pairs(a, c).cost, independent_pairs(a, c, rng).cost + 1e-12);
  }
}

TEST(OtPairs, OptimalAgainstRandomSwaps) {
  // No pairwise exchange of targets lowers the cost of a large exact plan.
  Rng rng(6);
  const Tensor a = rng.normal_tensor(256, 2), c = rng.normal_tensor(256, 2);
  auto plan = ot_pairs(a, c);
  EXPECT_TRUE(is_permutation_of_range(plan.perm));
  for (int k = 0; k < 2000; ++k) {
    const std::size_t i = rng.below(256), j = rng.below(256);
    const double before = sq_dist(a.row(i), c.row(plan.perm[i])) + sq_dist(a.row(j), c.row(plan.perm[j]));
    const double after = sq_dist(a.row(i), c.row(plan.perm[j])) + sq_dist(a.row(j), c.row(plan.perm[i]));
    EXPECT_GE(after, before - 1e-9);
  }
}

TEST(ApplyPlan, GathersTargets) {
  const Tensor t = Tensor::from_rows({{10}, {20}, {30}});
  EXPECT_EQ(apply_plan(t, CouplingPlan{{2, 0, 1}, 0.0}), Tensor::from_rows({{30}, {10}, {20}}));
}
