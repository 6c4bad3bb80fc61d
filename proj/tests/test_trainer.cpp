// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "fdm/fdm.hpp"

using namespace fdm;

namespace {

TrainConfig tiny_config(GeneratorMode mode = GeneratorMode::unconstrained_mlp) {
  TrainConfig c;
  c.seed = 3;
  c.generator.mode = mode;
  c.generator.hidden = {16, 16};
  c.consistency.hidden = {16, 16};
  c.batch_size = 16;
  c.n_times = 10;
  c.t_f = 3;
  c.t_g = 2;
  c.outer_iters = 3;
  c.eval_interval = 0;
  c.eval_samples = 50;
  c.eval_projections = 4;
  if (mode == GeneratorMode::weakly_supervised) c.anchors.count = 3;
  return c;
}

ConsistencyNet identity_net(std::size_t dim = 2) {
  Rng rng(0);
  return ConsistencyNet(ConsistencyNetSpec{dim, {8}, Activation::tanh, 4, 0.0}, rng);
}

Generator linear_generator(const Tensor& a) {
  Rng rng(0);
  Generator g(GeneratorSpec{GeneratorMode::linear_map, a.cols(), a.rows()}, rng);
  g.params().value("A") = a;
  return g;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fdm_trainer_" + name)).string();
}

}  // namespace

TEST(ConsistencyLoss, ZeroTrunkEqualsScaledPairDistance) {
  const ConsistencyNet f = identity_net();
  Rng rng(1);
  const CoupledBatch pairs{rng.normal_tensor(8, 2), rng.normal_tensor(8, 2)};
  const auto t = sample_time_grid(8, 100, rng);
  const double dt = 0.01;
  double expected = 0.0;
  for (std::size_t r = 0; r < 8; ++r) expected += sq_dist(pairs.x0.row(r), pairs.x1.row(r)) / 8.0;
  expected *= dt * dt;
  const InterpolantSpec lin{};
  EXPECT_NEAR(consistency_loss_value(f, f, pairs, t, dt, lin), expected, 1e-15);
}

TEST(ConsistencyLoss, PerfectGeneratorGivesZero) {
  // g = Id from the same batch: OT pairs every row with itself, so v = 0.
  const ConsistencyNet f = identity_net();
  const Generator g = linear_generator(Tensor::from_rows({{1, 0}, {0, 1}}));
  Rng rng(2);
  const Tensor z = rng.normal_tensor(32, 2);
  const CoupledBatch pairs = couple(g.evaluate(z), z, CouplingKind::ot, rng);
  EXPECT_EQ(pairs.x1, pairs.x0);
  const auto t = sample_time_grid(32, 100, rng);
  EXPECT_EQ(consistency_loss_value(f, f, pairs, t, 0.01, InterpolantSpec{}), 0.0);
}

TEST(ConsistencyLoss, RowPermutationInvariant) {
  Rng rng(3);
  ConsistencyNet f(ConsistencyNetSpec{2, {8}, Activation::tanh, 4, 1.0}, rng);
  ConsistencyNet fm(ConsistencyNetSpec{2, {8}, Activation::tanh, 4, 1.0}, rng);
  const CoupledBatch pairs{rng.normal_tensor(10, 2), rng.normal_tensor(10, 2)};
  auto t = sample_time_grid(10, 20, rng);
  const auto perm = rng.permutation(10);
  std::vector<double> tp(10);
  for (std::size_t i = 0; i < 10; ++i) tp[i] = t[perm[i]];
  const CoupledBatch permuted{pairs.x0.gather_rows(perm), pairs.x1.gather_rows(perm)};
  EXPECT_NEAR(consistency_loss_value(f, fm, pairs, t, 0.05, {}), consistency_loss_value(f, fm, permuted, tp, 0.05, {}),
              1e-14);
}

TEST(ConsistencyLoss, RejectsStepPastOne) {
  const ConsistencyNet f = identity_net();
  const CoupledBatch pairs{Tensor(2, 2), Tensor(2, 2)};
  const std::vector<double> t{0.0, 0.995};
  EXPECT_THROW(consistency_loss_value(f, f, pairs, t, 0.01, {}), DomainError);
  EXPECT_NO_THROW(consistency_loss_value(f, f, pairs, std::vector<double>{0.0, 0.99}, 0.01, {}));
}

TEST(GeneratorLoss, HandValues) {
  const ConsistencyNet f0 = identity_net();
  Rng rng(0);
  const Generator zero(GeneratorSpec{GeneratorMode::unconstrained_mlp, 2, 2, {4}, Activation::tanh, 0.0}, rng);
  const Generator ident = linear_generator(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_DOUBLE_EQ(generator_loss_value(zero, ident, f0, Tensor::from_rows({{1, 1}})), 2.0);
  const Tensor z = Rng(4).normal_tensor(12, 2);
  EXPECT_EQ(generator_loss_value(ident, ident, f0, z), 0.0);
}

TEST(GeneratorLoss, SatisfiedPenaltyAddsNothing) {
  Rng rng(0);
  const Generator g(GeneratorSpec{GeneratorMode::weakly_supervised, 2, 2, {4}, Activation::tanh, 0.0}, rng,
                    PairedSet{Tensor::from_rows({{0.5, 0.5}}), Tensor(1, 2, 0.0)});
  EXPECT_EQ(g.paired_penalty_value(10.0), 0.0);
}

TEST(GradientIsolation, ExactZerosAcrossNetworks) {
  Rng rng(5);
  ConsistencyNet f(ConsistencyNetSpec{2, {8}, Activation::tanh, 4, 1.0}, rng);
  Generator g(GeneratorSpec{GeneratorMode::unconstrained_mlp, 2, 2, {8}, Activation::tanh, 1.0}, rng);
  const ConsistencyNet f_minus = f;
  const Generator g_minus = g;
  const Tensor z = rng.normal_tensor(8, 2);
  const auto t = sample_time_grid(8, 10, rng);

  f.params().zero_grad();
  g.params().zero_grad();
  forward_backward([&](Tape& tape) {
    const Bound pf = tape.bind(f.params());
    tape.bind(g.params());
    const CoupledBatch pairs = couple(g_minus.evaluate(z), rng.normal_tensor(8, 2), CouplingKind::ot, rng);
    return consistency_loss(tape, f, pf, f_minus, pairs, t, 0.1, {});
  });
  for (const auto& e : g.params().entries())
    for (double v : e.grad.raw()) EXPECT_EQ(v, 0.0) << e.name;
  double f_norm = 0.0;
  for (const auto& e : f.params().entries())
    for (double v : e.grad.raw()) f_norm += v * v;
  EXPECT_GT(f_norm, 0.0);

  f.params().zero_grad();
  g.params().zero_grad();
  forward_backward([&](Tape& tape) {
    tape.bind(f.params());
    const Bound pg = tape.bind(g.params());
    return generator_loss(tape, g, pg, g_minus, f_minus, z);
  });
  for (const auto& e : f.params().entries())
    for (double v : e.grad.raw()) EXPECT_EQ(v, 0.0) << e.name;
}

TEST(GradientChecks, LossesMatchFiniteDifferences) {
  Rng rng(6);
  ConsistencyNet f(ConsistencyNetSpec{2, {16, 16}, Activation::tanh, 8, 1.0}, rng);
  const ConsistencyNet fm(ConsistencyNetSpec{2, {16, 16}, Activation::tanh, 8, 1.0}, rng);
  Generator g(GeneratorSpec{GeneratorMode::unconstrained_mlp, 2, 2, {16, 16}, Activation::tanh, 1.0}, rng);
  const Generator gm = g;
  const CoupledBatch pairs{rng.normal_tensor(6, 2), rng.normal_tensor(6, 2)};
  const auto t = sample_time_grid(6, 10, rng);
  const Tensor z = rng.normal_tensor(6, 2);
  EXPECT_LT(finite_diff_check(f.params(),
                              [&](Tape& tape) {
                                return consistency_loss(tape, f, tape.bind(f.params()), fm, pairs, t, 0.1, {});
                              }),
            1e-6);
  EXPECT_LT(finite_diff_check(g.params(),
                              [&](Tape& tape) { return generator_loss(tape, g, tape.bind(g.params()), gm, fm, z); }),
            1e-6);
}

TEST(TimeGrid, ValuesOnGrid) {
  Rng rng(7);
  const auto t = sample_time_grid(5000, 100, rng);
  std::vector<int> seen(100, 0);
  for (double v : t) {
    const long k = std::lround(v * 100.0);
    EXPECT_EQ(v, static_cast<double>(k) / 100.0);
    EXPECT_LE(v, 0.99);
    EXPECT_GE(v, 0.0);
    ++seen[static_cast<std::size_t>(k)];
  }
  for (int s : seen) EXPECT_GT(s, 0);
}

TEST(FdmTrain, ZeroIterationsIsInitialization) {
  TrainConfig c = tiny_config();
  c.outer_iters = 0;
  const auto metrics = temp_path("zero_metrics.csv");
  const auto r = fdm_train(c, {"", metrics, {}});
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(read_file_bytes(metrics), metrics_csv_header());
  auto [s, t] = resolve_datasets(c);
  const Checkpoint init = initial_state(c, s, t);
  EXPECT_EQ(checkpoint_to_string(r.checkpoint), checkpoint_to_string(init));
}

TEST(FdmTrain, DeterministicAcrossRuns) {
  for (auto mode : {GeneratorMode::unconstrained_mlp, GeneratorMode::linear_map, GeneratorMode::weakly_supervised}) {
    const TrainConfig c = tiny_config(mode);
    EXPECT_EQ(checkpoint_to_string(fdm_train(c).checkpoint), checkpoint_to_string(fdm_train(c).checkpoint))
        << to_string(mode);
  }
}

TEST(FdmTrain, ResumeMatchesUninterrupted) {
  for (double ema : {0.0, 0.5}) {
    TrainConfig c = tiny_config();
    c.ema_decay = ema;
    c.outer_iters = 4;
    const Checkpoint full = fdm_train(c).checkpoint;
    TrainConfig first = c;
    first.outer_iters = 2;
    const auto path = temp_path("resume.json");
    fdm_train(first, {path, "", {}});
    const Checkpoint resumed = fdm_train(c, {}, load_checkpoint(path)).checkpoint;
    EXPECT_EQ(checkpoint_to_string(resumed), checkpoint_to_string(full)) << ema;
  }
}

TEST(FdmTrain, MetricsRows) {
  TrainConfig c = tiny_config();
  c.eval_interval = 2;
  const auto metrics = temp_path("metrics.csv");
  const auto r = fdm_train(c, {"", metrics, {}});
  ASSERT_EQ(r.metrics.size(), 3u);
  EXPECT_FALSE(r.metrics[0].mmd.has_value());
  EXPECT_TRUE(r.metrics[1].mmd.has_value());
  EXPECT_TRUE(r.metrics[2].mmd.has_value());  // final row always evaluated
  std::string expected = metrics_csv_header();
  for (const auto& row : r.metrics) expected += metrics_csv_row(row);
  EXPECT_EQ(read_file_bytes(metrics), expected);
}

TEST(FdmTrain, DivergenceKeepsLastGoodCheckpoint) {
  TrainConfig c = tiny_config();
  c.outer_iters = 2;
  const auto path = temp_path("diverge.json");
  Checkpoint ck = fdm_train(c).checkpoint;
  const std::string good = checkpoint_to_string(ck);
  ck.config.divergence_threshold = 1e-30;
  c.outer_iters = 4;
  EXPECT_THROW(fdm_train(c, {path, "", {}}, ck), NumericalDivergence);
  Checkpoint saved = load_checkpoint(path);
  EXPECT_EQ(saved.outer_iter, 2u);
  saved.config.divergence_threshold = 1e6;
  saved.config.outer_iters = 2;
  EXPECT_EQ(checkpoint_to_string(saved), good);
}

TEST(FdmTrain, RejectsBadConfigBeforeTraining) {
  TrainConfig c = tiny_config();
  c.generator.input_dim = 3;
  EXPECT_THROW(fdm_train(c), ConfigError);
  c = tiny_config();
  c.t_f = 0;
  EXPECT_THROW(fdm_train(c), ConfigError);
  c = tiny_config();
  c.target.kind = DatasetKind::point_cloud_file;
  c.target.path = "/nonexistent.csv";
  EXPECT_THROW(fdm_train(c), ConfigError);
}

TEST(FdmTrain, LinearMapStaysLinear) {
  TrainConfig c = tiny_config(GeneratorMode::linear_map);
  const Checkpoint ck = fdm_train(c).checkpoint;
  const Tensor z = Rng(8).normal_tensor(20, 2);
  for (double s : {-2.5, 0.0, 3.0, 1e3}) {
    Tensor sz = z;
    for (auto& v : sz.raw()) v *= s;
    Tensor expected = ck.g->evaluate(z);
    for (auto& v : expected.raw()) v *= s;
    const Tensor got = ck.g->evaluate(sz);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12 * (1 + std::abs(expected[i])));
  }
}

TEST(WeakSupervision, AnchorsAreOtPaired) {
  TrainConfig c = tiny_config(GeneratorMode::weakly_supervised);
  c.anchors.count = 5;
  auto [s, t] = resolve_datasets(c);
  const auto pairs = resolve_pairs(c, s, t);
  ASSERT_TRUE(pairs.has_value());
  EXPECT_EQ(pairs->z.rows(), 5u);
  const auto plan = ot_pairs(pairs->z, pairs->x);
  EXPECT_EQ(plan.perm, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(GcmTrain, ZeroStepsIsIdentity) {
  TrainConfig c = tiny_config();
  c.mode = TrainMode::gcm;
  c.outer_iters = 0;
  c.consistency.final_init_scale = 0.0;
  c.source.kind = DatasetKind::two_moons;
  const Checkpoint ck = gcm_train(c).checkpoint;
  EXPECT_FALSE(ck.g.has_value());
  const Tensor x = sample(c.source, 40, 1);
  EXPECT_EQ(ck.f.evaluate(x, 0.0), x);
}

TEST(GcmTrain, RejectsDimensionMismatch) {
  TrainConfig c = tiny_config();
  c.mode = TrainMode::gcm;
  c.source.kind = DatasetKind::standard_normal_latent;
  c.source.latent_dim = 3;
  EXPECT_THROW(gcm_train(c), ConfigError);
}

TEST(Checkpoint, ByteIdenticalRoundTrip) {
  for (double ema : {0.0, 0.9}) {
    TrainConfig c = tiny_config(GeneratorMode::weakly_supervised);
    c.ema_decay = ema;
    const auto path = temp_path("rt.json"), path2 = temp_path("rt2.json");
    fdm_train(c, {path, "", {}});
    save_checkpoint(load_checkpoint(path), path2);
    EXPECT_EQ(read_file_bytes(path), read_file_bytes(path2));
  }
}

TEST(Checkpoint, CorruptionDetected) {
  const auto path = temp_path("corrupt.json");
  fdm_train(tiny_config(), {path, "", {}});
  const std::string bytes = read_file_bytes(path);

  write_file_bytes(path, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(path), CheckpointError);

  std::string flipped = bytes;
  const auto pos = flipped.find("\"outer_iter\":3");
  ASSERT_NE(pos, std::string::npos);
  flipped[pos + 13] = '4';
  write_file_bytes(path, flipped);
  try {
    load_checkpoint(path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }

  std::string versioned = bytes;
  const auto vpos = versioned.find("\"version\":1");
  ASSERT_NE(vpos, std::string::npos);
  versioned[vpos + 10] = '9';
  write_file_bytes(path, versioned);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.json")), CheckpointError);
}
