#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nashkit/analysis.hpp"
#include "nashkit/games.hpp"
#include "oracles.hpp"

using namespace nashkit;

namespace {

Vector perturbed_initial(const GanSpec& spec, std::uint64_t seed, double noise) {
  Vector x = gan_initial_state(spec, seed).x;
  Rng rng(seed + 1000);
  for (double& xi : x) xi += noise * rng.normal();
  return x;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nashkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(AnalyticField, ScalarBilinear) {
  const FieldEval fe = analytic_field(BilinearGame{Matrix{{1.0}}}, GameState({1.0, 2.0}, 1));
  EXPECT_EQ(fe.v, (Vector{2.0, -1.0}));
}

TEST(AnalyticField, QuadraticAtOrigin) {
  const FieldEval fe = analytic_field(QuadraticGame{1.0, 1.0, Matrix::identity(2)}, GameState({0, 0, 0, 0}, 2));
  EXPECT_EQ(fe.norm, 0.0);
}

TEST(AnalyticField, QuadraticBlockAssembly) {
  const QuadraticGame q{2.0, 1.0, Matrix{{0, 1}, {-1, 0}}};
  const Matrix b{{-2, 0, 0, 1}, {0, -2, -1, 0}, {0, 1, -1, 0}, {-1, 0, 0, -1}};
  EXPECT_EQ(q.field_jacobian(), b);
  Rng rng(71);
  const Vector x = oracle::random_vector(rng, 4);
  EXPECT_LT(oracle::max_abs_diff(analytic_field(q, GameState(x, 2)).v, b * x), 1e-15);
}

TEST(AnalyticField, ShapeMismatch) {
  EXPECT_THROW(analytic_field(BilinearGame{Matrix{{1.0, 2.0}}}, GameState({1.0, 2.0}, 1)), std::invalid_argument);
}

TEST(AnalyticFieldProperty, AgreesWithAutodiff) {
  Rng rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n1 = 1 + rng.below(3), n2 = 1 + rng.below(3);
    const QuadraticGame q{rng.normal(), rng.normal(), oracle::random_matrix(rng, n1, n2)};
    const BilinearGame b{oracle::random_matrix(rng, n1, n2)};
    const GameState s(oracle::random_vector(rng, n1 + n2, 3.0), n1);
    EXPECT_LT(oracle::max_abs_diff(gradient_field(q.game(), s).v, analytic_field(q, s).v), 1e-10);
    EXPECT_LT(oracle::max_abs_diff(gradient_field(b.game(), s).v, analytic_field(b, s).v), 1e-10);
  }
}

TEST(Mlp, ShapeAndParamCount) {
  const MlpShape s{{16, 16, 16, 16, 16, 2}};
  EXPECT_EQ(s.param_count(), 4 * (16 * 16 + 16) + 16 * 2 + 2);
  EXPECT_THROW(MlpShape{{3}}.validate(), std::invalid_argument);
  EXPECT_THROW((MlpShape{{3, 0, 1}}.validate()), std::invalid_argument);
}

TEST(Mlp, TapeForwardMatchesPlainForward) {
  Rng rng(73);
  const MlpShape shape{{3, 5, 4, 2}};
  Vector p = init_mlp(shape, rng);
  for (double& pi : p) pi += 0.1 * rng.normal();
  const Vector in = oracle::random_vector(rng, 3);
  ad::Tape t;
  const auto params = t.inputs(p);
  const auto out = mlp_forward(params, shape, in);
  const Vector plain = mlp_forward_values(p, shape, in);
  ASSERT_EQ(out.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i].value(), plain[i], 1e-14);
  const auto vin = t.inputs(in);
  const auto out2 = mlp_forward(params, shape, std::span<const ad::Var>(vin));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out2[i].value(), plain[i], 1e-14);
}

TEST(Mlp, HandComputedNetwork) {
  // 1 → 2 → 1: hidden = relu(w·x + b), out = u·hidden + c
  const MlpShape shape{{1, 2, 1}};
  const Vector p = {1.0, -1.0, 0.0, 0.5, 2.0, 3.0, -1.0};
  EXPECT_DOUBLE_EQ(mlp_forward_values(p, shape, Vector{2.0})[0], 2.0 * 2.0 + 3.0 * 0.0 - 1.0);
  EXPECT_DOUBLE_EQ(mlp_forward_values(p, shape, Vector{-1.0})[0], 2.0 * 0.0 + 3.0 * 1.5 - 1.0);
}

TEST(Mlp, InitializationStatistics) {
  Rng rng(74);
  const MlpShape shape{{50, 400, 1}};
  const Vector p = init_mlp(shape, rng);
  double s2 = 0.0;
  for (std::size_t k = 0; k < 50 * 400; ++k) s2 += p[k] * p[k];
  EXPECT_NEAR(s2 / (50 * 400), 2.0 / 50.0, 0.05 * 2.0 / 50.0);
  for (std::size_t k = 50 * 400; k < 50 * 400 + 400; ++k) EXPECT_EQ(p[k], 0.0);
}

TEST(SampleTarget, ZeroSigmaLandsOnModes) {
  Rng rng(75);
  const MoGTarget t{8, 0.0};
  for (const Point2& p : sample_target(t, 100, rng)) {
    bool on_mode = false;
    for (std::size_t k = 0; k < 8; ++k) on_mode |= p == t.mode(k);
    EXPECT_TRUE(on_mode);
  }
  EXPECT_THROW(sample_target(t, 0, rng), std::invalid_argument);
}

TEST(SampleTarget, ModeFrequenciesAndVariance) {
  Rng rng(76);
  const MoGTarget t;
  const std::size_t n = 100000;
  const auto pts = sample_target(t, n, rng);
  std::vector<std::size_t> counts(8, 0);
  double var = 0.0;
  for (const Point2& p : pts) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t k = 0; k < 8; ++k) {
      const Point2 c = t.mode(k);
      const double d = std::hypot(p[0] - c[0], p[1] - c[1]);
      if (d < bd) bd = d, best = k;
    }
    ++counts[best];
    const Point2 c = t.mode(best);
    var += (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]);
  }
  const double pk = 1.0 / 8.0;
  const double ci = 3.0 * std::sqrt(pk * (1 - pk) / n);
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c) / n, pk, ci);
  // per-coordinate variance σ² = 1e-4; the estimator over 2n squared normals has sd σ²·√(2/(2n))
  EXPECT_NEAR(var / (2.0 * n), 1e-4, 3.0 * 1e-4 * std::sqrt(1.0 / n));
}

TEST(ModeCoverage, Examples) {
  const MoGTarget t;
  std::vector<Point2> centers;
  for (std::size_t k = 0; k < 8; ++k) centers.push_back(t.mode(k));
  EXPECT_EQ(mode_coverage(centers, t, 1.0), 8u);
  const std::vector<Point2> one(50, t.mode(3));
  EXPECT_EQ(mode_coverage(one, t, 1.0), 1u);
  EXPECT_THROW(mode_coverage(one, t, 0.0), std::invalid_argument);
  Rng rng(77);
  EXPECT_EQ(mode_coverage(sample_target(t, 10000, rng), t, 1.0), 8u);
}

TEST(ModeCoverageProperty, MonotoneInMultiplier) {
  Rng rng(78);
  const MoGTarget t{8, 0.05};
  std::vector<Point2> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({rng.normal(), rng.normal()});
  std::size_t prev = 0;
  for (double m : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0}) {
    const std::size_t c = mode_coverage(pts, t, m);
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_EQ(prev, 8u);
}

TEST(GanGame, ObjectivesAndShapes) {
  GanSpec spec = gan_preset(Preset::small);
  EXPECT_EQ(spec.dim(), spec.generator.param_count() + spec.discriminator.param_count());
  spec.objective = Objective::minimax_js;
  EXPECT_TRUE(gan_game(spec, 1).is_zero_sum());
  spec.objective = Objective::indicator;
  EXPECT_TRUE(gan_game(spec, 1).is_zero_sum());
  spec.objective = Objective::non_saturating;
  EXPECT_FALSE(gan_game(spec, 1).is_zero_sum());
  GanSpec bad = spec;
  bad.discriminator = MlpShape{{3, 4, 1}};
  EXPECT_THROW(gan_game(bad, 1), std::invalid_argument);
  bad = spec;
  bad.batch = 0;
  EXPECT_THROW(gan_game(bad, 1), std::invalid_argument);
  EXPECT_EQ(objective_from_string("standard"), Objective::non_saturating);
  EXPECT_THROW(objective_from_string("wasserstein"), std::invalid_argument);
}

TEST(GanGame, PaperPresetShapes) {
  const GanSpec spec = gan_preset(Preset::paper);
  EXPECT_EQ(spec.generator.dims, (std::vector<std::size_t>{16, 16, 16, 16, 16, 2}));
  EXPECT_EQ(spec.discriminator.dims, (std::vector<std::size_t>{2, 16, 16, 16, 16, 1}));
  EXPECT_EQ(spec.target.modes, 8u);
  EXPECT_EQ(spec.target.sigma, 1e-2);
  EXPECT_EQ(spec.batch, 64u);
}

TEST(GanGame, MinimaxIsExactlyZeroSum) {
  GanSpec spec = gan_preset(Preset::small);
  spec.objective = Objective::minimax_js;
  const auto [f, g] = gan_game(spec, 2).utility_values(perturbed_initial(spec, 3, 0.1));
  EXPECT_EQ(g, -f);
}

TEST(GanGame, IndicatorCriticGradientVanishesForConstantCritic) {
  // a critic whose last layer has zero weights outputs its bias everywhere:
  // E_q[t] - E_p[t] = 0 and its gradient wrt the output bias cancels exactly
  GanSpec spec = gan_preset(Preset::small);
  spec.objective = Objective::indicator;
  Vector x = perturbed_initial(spec, 4, 0.1);
  const std::size_t n1 = spec.generator_params();
  const std::size_t last_w = spec.dim() - 1 - spec.discriminator.dims[spec.discriminator.dims.size() - 2];
  for (std::size_t k = last_w; k < spec.dim() - 1; ++k) x[k] = 0.0;
  x.back() = 0.7;
  const TwoPlayerGame g = gan_game(spec, 5);
  const auto [f, gv] = g.utility_values(x);
  EXPECT_NEAR(f, 0.0, 1e-15);
  const Vector v = g.field(x);
  EXPECT_NEAR(v.back(), 0.0, 1e-15);
  for (std::size_t k = 0; k < n1; ++k) EXPECT_EQ(v[k], 0.0);
  (void)gv;
}

TEST(GanGame, GradientsMatchFiniteDifferences) {
  for (Objective obj : {Objective::minimax_js, Objective::non_saturating, Objective::indicator}) {
    GanSpec spec = gan_preset(Preset::small);
    spec.objective = obj;
    const TwoPlayerGame g = gan_game(spec, 6);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Vector x = perturbed_initial(spec, 10 + seed, 0.1);
      const Vector v = g.field(x);
      // central differences of each player's own utility
      Vector fd(x.size());
      Vector xp = x;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = 1e-6;
        xp[j] = x[j] + d;
        const auto up = g.utility_values(xp);
        xp[j] = x[j] - d;
        const auto dn = g.utility_values(xp);
        xp[j] = x[j];
        fd[j] = j < spec.generator_params() ? (up.first - dn.first) / (2 * d) : (up.second - dn.second) / (2 * d);
      }
      EXPECT_LT(oracle::rel_error(v, fd), 1e-4) << to_string(obj) << " seed " << seed;
    }
  }
}

TEST(GanGameProperty, DeterministicGivenParamsAndSeed) {
  const GanSpec spec = gan_preset(Preset::small);
  const Vector x = perturbed_initial(spec, 7, 0.1);
  const Vector a = gan_game(spec, 9).field(x);
  const Vector b = gan_game(spec, 9).field(x);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, gan_game(spec, 10).field(x));
  EXPECT_EQ(gan_initial_state(spec, 3).x, gan_initial_state(spec, 3).x);
}

TEST(GanGameProperty, MinimaxBlockStructure) {
  GanSpec spec = gan_preset(Preset::small);
  spec.objective = Objective::minimax_js;
  const TwoPlayerGame g = gan_game(spec, 11);
  const GameState s(perturbed_initial(spec, 12, 0.1), spec.generator_params());
  const Matrix j = jacobian(g, s);
  const std::size_t n1 = s.split, n2 = s.dim() - s.split;
  const Matrix tr = block(j, 0, n1, n1, n2), bl = block(j, n1, 0, n2, n1);
  EXPECT_LT(oracle::max_abs_diff(bl, tr.transpose() * -1.0), 1e-5 * std::max(1.0, j.frobenius_norm()));
}

TEST(GanGameProperty, SamplesDependOnlyOnGeneratorAndSeed) {
  const GanSpec spec = gan_preset(Preset::small);
  Vector x = perturbed_initial(spec, 13, 0.1);
  const std::span<const double> gen(x.data(), spec.generator_params());
  const auto a = generator_samples(spec, gen, 100, 4);
  for (std::size_t k = spec.generator_params(); k < x.size(); ++k) x[k] += 1.0;
  const auto b = generator_samples(spec, std::span<const double>(x.data(), spec.generator_params()), 100, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generator_samples(spec, gen, 100, 5));
}

TEST(Snapshot, BitExactRoundTrip) {
  const auto dir = scratch_dir("snapshot");
  const GanSpec spec = gan_preset(Preset::small);
  GameState s = gan_initial_state(spec, 14);
  s.x[0] = -0.0;
  s.x[1] = 5e-324;
  s.x[2] = 1.0 / 3.0;
  s.x[3] = -1.7976931348623157e308;
  const Snapshot snap = gan_snapshot(spec, s);
  write_snapshot((dir / "params").string(), snap);
  const Snapshot back = read_snapshot((dir / "params.json").string());
  ASSERT_EQ(back.values.size(), snap.values.size());
  for (std::size_t i = 0; i < snap.values.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[i]), std::bit_cast<std::uint64_t>(snap.values[i]));
  EXPECT_EQ(back, snap);
  EXPECT_EQ(std::filesystem::file_size(dir / "params.bin"), 8 * snap.values.size());
  // explicit little-endian layout: 1/3 = 0x3FD5555555555555
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  unsigned char bytes[24];
  bin.read(reinterpret_cast<char*>(bytes), 24);
  EXPECT_EQ(bytes[16], 0x55);
  EXPECT_EQ(bytes[23], 0x3F);
}

TEST(Snapshot, VectorSnapshotAndCorruption) {
  const auto dir = scratch_dir("snapshot_vec");
  const Snapshot snap = vector_snapshot(GameState({1.5, -2.5, 3.0}, 1));
  write_snapshot((dir / "s").string(), snap);
  EXPECT_EQ(read_snapshot((dir / "s.json").string()), snap);
  std::filesystem::resize_file(dir / "s.bin", 16);
  EXPECT_THROW(read_snapshot((dir / "s.json").string()), std::runtime_error);
  EXPECT_THROW(read_snapshot((dir / "missing.json").string()), std::runtime_error);
}
