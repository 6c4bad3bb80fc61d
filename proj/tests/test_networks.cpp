// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fdm/fdm.hpp"

using namespace fdm;

namespace {

ConsistencyNet small_net(std::uint64_t seed, double final_scale = 1.0, std::size_t dim = 2) {
  Rng rng(seed);
  return ConsistencyNet(ConsistencyNetSpec{dim, {16, 16}, Activation::tanh, 8, final_scale}, rng);
}

std::vector<double> random_times(std::size_t n, Rng& rng) {
  std::vector<double> t(n);
  for (auto& v : t) v = rng.uniform();
  return t;
}

// Jitters every parameter so grad checks see generic (nonzero-bias) draws.
void jitter(ParamStore& ps, Rng& rng, double scale = 0.3) {
  for (auto& e : ps.entries())
    for (auto& v : e.value.raw()) v += scale * rng.normal();
}

}  // namespace

TEST(TimeEmbedding, WidthAndValues) {
  TimeEmbedding emb{8};
  const std::vector<double> t{0.0, 0.25};
  const Tensor e = emb.embed(t);
  ASSERT_EQ(e.cols(), 16u);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(e(0, 2 * k), 0.0);
    EXPECT_EQ(e(0, 2 * k + 1), 1.0);
  }
  EXPECT_NEAR(e(1, 0), std::sin(std::numbers::pi * 0.25), 1e-15);
  EXPECT_NEAR(e(1, 3), std::cos(2 * std::numbers::pi * 0.25), 1e-15);
}

TEST(TimeEmbedding, DeterministicAndSmooth) {
  TimeEmbedding emb{8};
  const std::vector<double> a{0.3}, b{0.3 + 1e-9};
  EXPECT_EQ(emb.embed(a), emb.embed(a));
  // Lipschitz constant of the top frequency is 2^7 pi.
  EXPECT_LT(max_abs_diff(emb.embed(a), emb.embed(b)), 128 * std::numbers::pi * 1e-9 * 1.01);
}

TEST(ConsistencyNet, IdentityAtTimeOneBitwise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ConsistencyNet f = small_net(seed, 3.0);
    Rng rng(100 + seed);
    jitter(f.params(), rng, 1.0);
    const Tensor x = rng.normal_tensor(9, 2, 5.0);
    EXPECT_EQ(f.evaluate(x, 1.0), x);
  }
}

TEST(ConsistencyNet, ZeroTrunkIsIdentity) {
  ConsistencyNet f = small_net(1, 0.0);
  Rng rng(2);
  const Tensor x = rng.normal_tensor(7, 2);
  for (double t : {0.0, 0.3, 0.99}) EXPECT_EQ(f.evaluate(x, t), x);
}

TEST(ConsistencyNet, TimeZeroIsSkipPlusTrunk) {
  ConsistencyNet f = small_net(3);
  Rng rng(4);
  const Tensor x = rng.normal_tensor(5, 2);
  const std::vector<double> zeros(5, 0.0);

  Tape tape;
  Bound p = tape.bind_frozen(f.params());
  const Tensor features = tape.value(tape.concat_cols(tape.constant(x), tape.constant(f.embedding().embed(zeros))));
  const Tensor trunk = tape.value(f.trunk(tape, p, tape.constant(features)));
  Tensor expected = x;
  for (std::size_t i = 0; i < x.size(); ++i) expected[i] += trunk[i];
  EXPECT_LT(max_abs_diff(f.evaluate(x, 0.0), expected), 1e-15);
}

TEST(ConsistencyNet, ShapePreserved) {
  ConsistencyNet f = small_net(5, 1.0, 3);
  const Tensor x = Rng(6).normal_tensor(4, 3);
  EXPECT_EQ(f.evaluate(x, 0.5).shape(), x.shape());
}

TEST(ConsistencyNet, RejectsTimeOutsideUnitInterval) {
  ConsistencyNet f = small_net(1);
  const Tensor x(2, 2);
  EXPECT_THROW(f.evaluate(x, -0.01), DomainError);
  EXPECT_THROW(f.evaluate(x, 1.5), DomainError);
  EXPECT_THROW(f.evaluate(x, std::nan("")), DomainError);
}

TEST(ConsistencyNet, RejectsWrongWidth) {
  ConsistencyNet f = small_net(1);
  EXPECT_THROW(f.evaluate(Tensor(2, 3), 0.5), ConfigError);
}

class ConsistencyGrad : public ::testing::TestWithParam<int> {};

TEST_P(ConsistencyGrad, MatchesFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  ConsistencyNet f = small_net(seed);
  Rng rng(1000 + seed);
  jitter(f.params(), rng);
  const Tensor x = rng.normal_tensor(4, 2);
  const auto t = random_times(4, rng);
  const double err = finite_diff_check(f.params(), [&](Tape& tape) {
    Bound p = tape.bind(f.params());
    return tape.mean(tape.square(f.forward(tape, p, tape.constant(x), t)));
  });
  EXPECT_LT(err, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(TenDraws, ConsistencyGrad, ::testing::Range(0, 10));

TEST(Generator, LinearIdentity) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::linear_map, 3, 3}, rng);
  g.params().value("A") = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Tensor z = Rng(1).normal_tensor(6, 3);
  EXPECT_EQ(g.evaluate(z), z);
}

TEST(Generator, LinearDiagonal) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::linear_map, 2, 2}, rng);
  g.params().value("A") = Tensor::from_rows({{2, 0}, {0, 3}});
  EXPECT_EQ(g.evaluate(Tensor::from_rows({{1, 1}})), Tensor::from_rows({{2, 3}}));
}

TEST(Generator, LinearHasOnlyMatrix) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::linear_map, 2, 5}, rng);
  ASSERT_EQ(g.params().size(), 1u);
  EXPECT_EQ(g.params().value("A").shape(), (Shape{5, 2}));
}

TEST(Generator, LinearCommutesWithScaling) {
  Rng rng(8);
  Generator g(GeneratorSpec{GeneratorMode::linear_map, 4, 2}, rng);
  const Tensor z = Rng(9).normal_tensor(10, 4);
  for (double c : {-3.0, 0.0, 0.5, 7.25}) {
    Tensor cz = z;
    for (auto& v : cz.raw()) v *= c;
    Tensor expected = g.evaluate(z);
    for (auto& v : expected.raw()) v *= c;
    EXPECT_LT(max_abs_diff(g.evaluate(cz), expected), 1e-12);
  }
}

TEST(Generator, ZeroFinalLayerGivesBias) {
  Rng rng(0);
  GeneratorSpec spec{GeneratorMode::unconstrained_mlp, 2, 2, {8, 8}, Activation::tanh, 0.0};
  Generator g(spec, rng);
  g.params().value("l2.b") = Tensor::from_rows({{0.5, -1.0}});
  const Tensor out = g.evaluate(Rng(1).normal_tensor(6, 2));
  for (std::size_t r = 0; r < out.rows(); ++r) {
    EXPECT_EQ(out(r, 0), 0.5);
    EXPECT_EQ(out(r, 1), -1.0);
  }
}

TEST(Generator, LatentDimensionChange) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::unconstrained_mlp, 4, 2, {8}}, rng);
  EXPECT_EQ(g.evaluate(Tensor(3, 4)).shape(), (Shape{3, 2}));
  EXPECT_THROW(g.evaluate(Tensor(3, 2)), ConfigError);
}

TEST(Generator, WeaklySupervisedNeedsPairs) {
  Rng rng(0);
  GeneratorSpec spec{GeneratorMode::weakly_supervised, 2, 2, {8}};
  EXPECT_THROW(Generator(spec, rng), ConfigError);
  EXPECT_THROW(Generator(spec, rng, PairedSet{Tensor(0, 2), Tensor(0, 2)}), ConfigError);
  EXPECT_THROW(Generator(spec, rng, PairedSet{Tensor(1, 3), Tensor(1, 2)}), ConfigError);
}

TEST(Generator, PenaltyRequiresPairs) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::unconstrained_mlp, 2, 2, {8}}, rng);
  EXPECT_THROW(g.paired_penalty_value(1.0), ConfigError);
}

namespace {

// Weakly-supervised generator whose output is identically zero.
Generator zero_generator(PairedSet pairs) {
  Rng rng(0);
  return Generator(GeneratorSpec{GeneratorMode::weakly_supervised, 2, 2, {4}, Activation::tanh, 0.0}, rng,
                   std::move(pairs));
}

}  // namespace

TEST(PairedPenalty, HandValues) {
  EXPECT_DOUBLE_EQ(zero_generator({Tensor::from_rows({{0.3, 0.1}}), Tensor::from_rows({{1, 0}})})
                       .paired_penalty_value(1.0),
                   1.0);
  // Squared distances 1 and 3, weight 2: 2 * mean(1, 3) = 4.
  Generator g = zero_generator({Tensor::from_rows({{0, 0}, {1, 1}}), Tensor::from_rows({{1, 0}, {1, std::sqrt(2.0)}})});
  EXPECT_NEAR(g.paired_penalty_value(2.0), 4.0, 1e-15);
}

TEST(PairedPenalty, ZeroWhenInterpolating) {
  Generator g = zero_generator({Tensor::from_rows({{1, 2}, {3, 4}}), Tensor(2, 2, 0.0)});
  EXPECT_EQ(g.paired_penalty_value(10.0), 0.0);
}

class GeneratorGrad : public ::testing::TestWithParam<std::tuple<GeneratorMode, int>> {};

TEST_P(GeneratorGrad, MatchesFiniteDifferences) {
  const auto [mode, seed_i] = GetParam();
  const auto seed = static_cast<std::uint64_t>(seed_i);
  Rng rng(seed);
  const std::size_t d = 3, n = 2;
  std::optional<PairedSet> pairs;
  if (mode == GeneratorMode::weakly_supervised) pairs = PairedSet{rng.normal_tensor(3, d), rng.normal_tensor(3, n)};
  Generator g(GeneratorSpec{mode, d, n, {16, 16}, Activation::tanh, 1.0}, rng, pairs);
  jitter(g.params(), rng);
  const Tensor z = rng.normal_tensor(5, d);
  const double err = finite_diff_check(g.params(), [&](Tape& tape) {
    Bound p = tape.bind(g.params());
    Var loss = tape.mean(tape.square(g.forward(tape, p, tape.constant(z))));
    if (mode == GeneratorMode::weakly_supervised) loss = tape.add(loss, g.paired_penalty(tape, p, 10.0));
    return loss;
  });
  EXPECT_LT(err, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(
    AllModes, GeneratorGrad,
    ::testing::Combine(::testing::Values(GeneratorMode::unconstrained_mlp, GeneratorMode::linear_map,
                                         GeneratorMode::weakly_supervised),
                       ::testing::Range(0, 10)));

TEST(Activation, ParseRoundTrip) {
  for (auto a : {Activation::tanh, Activation::softplus, Activation::relu})
    EXPECT_EQ(parse_activation(to_string(a)), a);
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
  for (auto m : {GeneratorMode::unconstrained_mlp, GeneratorMode::linear_map, GeneratorMode::weakly_supervised})
    EXPECT_EQ(parse_generator_mode(to_string(m)), m);
}
