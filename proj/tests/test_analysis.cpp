#include <gtest/gtest.h>

#include <sstream>

#include "nashkit/analysis.hpp"
#include "nashkit/games.hpp"
#include "oracles.hpp"

using namespace nashkit;

namespace {

TwoPlayerGame scalar_bilinear() { return BilinearGame{Matrix{{1.0}}}.game(); }

/// -(PᵀP + I) + N with ‖N - Nᵀ‖₂ ≤ 1.
Matrix definite_plus_small_skew(Rng& rng, std::size_t n) {
  const Matrix p = oracle::random_matrix(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n)));
  Matrix a = p.transpose() * p;
  a *= -1.0;
  for (std::size_t i = 0; i < n; ++i) a(i, i) -= 1.0;
  Matrix skew = oracle::random_matrix(rng, n, n);
  skew = skew - skew.transpose();
  skew *= 1.0 / skew.frobenius_norm();  // ‖N - Nᵀ‖₂ ≤ ‖N - Nᵀ‖_F = 1 after halving below
  return a + skew * 0.5;
}

std::vector<Vector> run(const StepRule& rule, const TwoPlayerGame& g, Vector z, int steps) {
  std::vector<Vector> traj{z};
  for (int k = 0; k < steps; ++k) {
    z = apply_rule(rule, g, z);
    traj.push_back(z);
  }
  return traj;
}

}  // namespace

TEST(ClassifyFixedPoint, SimGAOnBilinearRepels) {
  const TwoPlayerGame g = scalar_bilinear();
  const FixedPointReport r = classify_fixed_point({Rule::simga, HyperParams{0.1}, {}}, g, GameState({0, 0}, 1), 1e-8);
  ASSERT_TRUE(r.is_fixed);
  EXPECT_NEAR(r.predicted_rate, std::sqrt(1.01), 1e-9);
  EXPECT_EQ(*r.classification, FixedPointClass::repelling_or_saddle);
}

TEST(ClassifyFixedPoint, ConsensusOnBilinearAttracts) {
  const TwoPlayerGame g = scalar_bilinear();
  const FixedPointReport r =
      classify_fixed_point({Rule::consensus, HyperParams{0.5, 1.0}, {}}, g, GameState({0, 0}, 1), 1e-8);
  ASSERT_TRUE(r.is_fixed);
  EXPECT_NEAR(r.predicted_rate, std::sqrt(0.5), 1e-9);
  EXPECT_EQ(*r.classification, FixedPointClass::attracting);
}

TEST(ClassifyFixedPoint, SimGAOnQuadraticBelowBoundAttracts) {
  const QuadraticGame q{0.5, 0.2, Matrix{{1.0, -2.0}, {0.5, 1.0}}};
  const double h = 0.9 * max_stable_step(eigenvalues(q.field_jacobian()));
  const FixedPointReport r =
      classify_fixed_point({Rule::simga, HyperParams{h}, {}}, q.game(), GameState({0, 0, 0, 0}, 2), 1e-8);
  EXPECT_EQ(*r.classification, FixedPointClass::attracting);
}

TEST(ClassifyFixedPoint, NonFixedPointReportsResidualOnly) {
  const FixedPointReport r =
      classify_fixed_point({Rule::simga, HyperParams{0.1}, {}}, scalar_bilinear(), GameState({1, 0}, 1), 1e-8);
  EXPECT_FALSE(r.is_fixed);
  EXPECT_DOUBLE_EQ(r.residual, 1.0);
  EXPECT_FALSE(r.classification.has_value());
}

TEST(ClassifyRadius, MarginalBand) {
  EXPECT_EQ(classify_radius(1.0 + 5e-7), FixedPointClass::marginal);
  EXPECT_EQ(classify_radius(1.0 - 5e-7), FixedPointClass::marginal);
  EXPECT_EQ(classify_radius(1.0 - 2e-6), FixedPointClass::attracting);
  EXPECT_EQ(classify_radius(1.0 + 2e-6), FixedPointClass::repelling_or_saddle);
}

TEST(FieldSpectrum, BilinearWithAndWithoutConsensus) {
  const GameState s({0.3, -0.8}, 1);
  EXPECT_LT(oracle::match_distance(field_spectrum(scalar_bilinear(), s, 0.0).eigenvalues,
                                   {Complex(0, 1), Complex(0, -1)}),
            1e-9);
  EXPECT_LT(oracle::match_distance(field_spectrum(scalar_bilinear(), s, 1.0).eigenvalues,
                                   {Complex(-1, 1), Complex(-1, -1)}),
            1e-8);
  EXPECT_THROW(field_spectrum(scalar_bilinear(), GameState({NAN, 0.0}, 1), 0.0), std::invalid_argument);
}

TEST(FieldSpectrum, PotentialGameIsReal) {
  const TwoPlayerGame g = TwoPlayerGame::general(
      3, 1,
      [](ad::Tape&, std::span<const ad::Var> x) { return ad::tanh(x[0] * x[1]) - ad::square(x[2]) + x[0] * x[2]; },
      [](ad::Tape&, std::span<const ad::Var> x) { return ad::tanh(x[0] * x[1]) - ad::square(x[2]) + x[0] * x[2]; });
  for (const Complex& l : field_spectrum(g, GameState({0.4, 0.3, -0.2}, 1), 0.0).eigenvalues)
    EXPECT_NEAR(l.imag(), 0.0, 1e-6);
}

TEST(FieldSpectrumProperty, ConstantJacobianClosedForm) {
  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const QuadraticGame q{rng.uniform(), rng.uniform(), oracle::random_matrix(rng, 2, 3)};
    const Matrix b = q.field_jacobian();
    const GameState s(oracle::random_vector(rng, 5), 2);
    for (double gamma : {0.0, 0.3, 2.0}) {
      const Matrix expected = b - (b.transpose() * b) * gamma;
      EXPECT_LT(oracle::match_distance(field_spectrum(q.game(), s, gamma).eigenvalues, eigenvalues(expected).eigenvalues),
                1e-6)
          << "gamma " << gamma;
    }
  }
}

TEST(QuotientBound, RotationViolatesUnscaledBound) {
  const QuotientBoundReport r = quotient_bound_check(Matrix{{0, 1}, {-1, 0}}, 1.0, 0);
  EXPECT_DOUBLE_EQ(r.rho, 1.0);
  EXPECT_NEAR(r.q_observed.value(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.bound_weak, 0.5);
  EXPECT_FALSE(r.holds);
  EXPECT_LE(r.q_observed.value(), r.bound_skew + 1e-12);
}

TEST(QuotientBound, SmallRotationAroundMinusIdentity) {
  // A = -I + 0.1·J: eigenvalues of A - γAᵀA are -(1 + 1.01γ) ± 0.1i
  const Matrix a{{-1, 0.1}, {-0.1, -1}};
  double prev = INFINITY;
  for (double gamma : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    const QuotientBoundReport r = quotient_bound_check(a, gamma, 2000, 3);
    EXPECT_NEAR(r.q_observed.value(), 0.1 / (1 + 1.01 * gamma), 1e-12);
    EXPECT_TRUE(r.holds);
    EXPECT_LT(r.q_observed.value(), prev);
    prev = r.q_observed.value();
    ASSERT_TRUE(r.c_estimate.has_value());
    // |v̄ᵀ(A+Aᵀ)v| = 2, |v̄ᵀ(A-Aᵀ)v| ≤ 0.2 so c ≥ 10
    EXPECT_GE(*r.c_estimate, 10.0 - 1e-9);
    EXPECT_LE(r.q_observed.value(), 1.0 / (*r.c_estimate + 2 * r.rho * r.rho * gamma) + 1e-12);
  }
}

TEST(QuotientBound, MinusIdentityHasZeroQuotient) {
  const QuotientBoundReport r = quotient_bound_check(Matrix::identity(3) * -1.0, 0.7, 0);
  EXPECT_EQ(r.q_observed.value(), 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(QuotientBound, Errors) {
  EXPECT_THROW(quotient_bound_check(Matrix::identity(2) * -1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(quotient_bound_check(Matrix{{-1, 0}, {0, 0}}, 1.0), std::invalid_argument);
  EXPECT_THROW(quotient_bound_check(Matrix::identity(2), 1.0), std::invalid_argument);
}

TEST(QuotientBoundProperty, RelaxedBoundAndMonotonicity) {
  Rng rng(62);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix a = definite_plus_small_skew(rng, 2 + rng.below(5));
    double prev = INFINITY;
    for (double gamma : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0}) {
      const QuotientBoundReport r = quotient_bound_check(a, gamma, 0);
      EXPECT_TRUE(r.holds);
      EXPECT_LE(r.q_observed.value(), prev + 1e-12);
      prev = r.q_observed.value();
    }
  }
}

TEST(FitRate, GeometricSequence) {
  std::vector<Vector> traj;
  for (int k = 0; k < 30; ++k) traj.push_back({std::pow(0.9, k), 0.0});
  EXPECT_NEAR(fit_convergence_rate(traj, Vector{0.0, 0.0}), 0.9, 1e-12);
}

TEST(FitRate, ConsensusOnBilinear) {
  const auto traj = run({Rule::consensus, HyperParams{0.5, 1.0}, {}}, scalar_bilinear(), {1.0, 0.3}, 40);
  EXPECT_NEAR(fit_convergence_rate(traj, Vector{0.0, 0.0}), std::sqrt(0.5), 1e-9);
}

TEST(FitRate, SimGAOnQuadraticMatchesSpectralRadius) {
  // a = b makes the Jacobian normal, so the error norm decays monotonically
  const QuadraticGame q{0.4, 0.4, Matrix{{1.0, 0.5}, {-0.4, 1.2}}};
  const double h = 0.9 * max_stable_step(eigenvalues(q.field_jacobian()));
  const double radius = eigenvalues(Matrix::identity(4) + q.field_jacobian() * h).spectral_radius;
  const auto traj = run({Rule::simga, HyperParams{h}, {}}, q.game(), {1.0, -0.5, 0.3, 0.8}, 400);
  EXPECT_NEAR(fit_convergence_rate(traj, Vector(4, 0.0)), radius, 0.02);
}

TEST(FitRate, Errors) {
  std::vector<Vector> few(5, Vector{1.0});
  EXPECT_THROW(fit_convergence_rate(few, Vector{0.0}), FitError);
  std::vector<Vector> growing;
  for (int k = 0; k < 20; ++k) growing.push_back({std::pow(1.1, k)});
  EXPECT_THROW(fit_convergence_rate(growing, Vector{0.0}), FitError);
}

TEST(AnalysisProperty, PredictedRateMatchesFittedRate) {
  Rng rng(63);
  for (int trial = 0; trial < 10; ++trial) {
    const QuadraticGame q{0.2 + rng.uniform(), 0.2 + rng.uniform(), oracle::random_matrix(rng, 2, 2)};
    const TwoPlayerGame g = q.game();
    const double gamma = 0.5;
    const Matrix w = q.field_jacobian() - (q.field_jacobian().transpose() * q.field_jacobian()) * gamma;
    const double h = 0.5 * max_stable_step(eigenvalues(w));
    const StepRule rule{Rule::consensus, HyperParams{h, gamma}, {}};
    const FixedPointReport r = classify_fixed_point(rule, g, GameState({0, 0, 0, 0}, 2), 1e-8);
    ASSERT_EQ(*r.classification, FixedPointClass::attracting);
    auto traj = run(rule, g, oracle::random_vector(rng, 4), 600);
    // keep the part of the trajectory above the round-off floor
    while (traj.size() > 20 && norm2(traj.back()) < 1e-200) traj.pop_back();
    const std::size_t n = traj.size();
    EXPECT_NEAR(fit_convergence_rate(std::span<const Vector>(traj).subspan(n / 2), Vector(4, 0.0)), r.predicted_rate,
                0.02);
  }
}

TEST(AnalysisProperty, AttractingImpliesLocalConvergence) {
  Rng rng(64);
  for (int trial = 0; trial < 10; ++trial) {
    const QuadraticGame q{0.1 + rng.uniform(), 0.1 + rng.uniform(), oracle::random_matrix(rng, 2, 2)};
    const TwoPlayerGame g = q.game();
    const double h = 0.8 * max_stable_step(eigenvalues(q.field_jacobian()));
    const StepRule rule{Rule::simga, HyperParams{h}, {}};
    const FixedPointReport r = classify_fixed_point(rule, g, GameState({0, 0, 0, 0}, 2), 1e-8);
    ASSERT_EQ(*r.classification, FixedPointClass::attracting);
    Vector delta = oracle::random_vector(rng, 4);
    const double scale = 1e-3 / norm2(delta);
    for (double& d : delta) d *= scale;
    const int budget = static_cast<int>(10 * std::ceil(1.0 / (1.0 - r.predicted_rate)) * std::log(1e3));
    Vector z = delta;
    int k = 0;
    while (k < budget && norm2(z) >= 1e-6) {
      z = apply_rule(rule, g, z);
      ++k;
    }
    EXPECT_LT(norm2(z), 1e-6) << "trial " << trial << " budget " << budget;
  }
}

TEST(SpectrumExport, Rows) {
  const auto rows = spectrum_histogram_export(Spectrum::from_eigenvalues({Complex(0, 1), Complex(0, -1)}));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (SpectrumRow{0, 1, false}));
  EXPECT_EQ(rows[1], (SpectrumRow{0, -1, false}));
  const auto clipped = spectrum_histogram_export(Spectrum::from_eigenvalues({Complex(-100), Complex(-1)}), -10.0);
  EXPECT_EQ(clipped[0], (SpectrumRow{-10, 0, true}));
  EXPECT_EQ(clipped[1], (SpectrumRow{-1, 0, false}));
}

TEST(SpectrumExport, MoGSpectrumCsvRoundTrip) {
  const GanSpec spec = gan_preset(Preset::small);
  const TwoPlayerGame g = gan_game(spec, 3);
  GameState s = gan_initial_state(spec, 4);
  Rng rng(65);
  for (double& xi : s.x) xi += 0.1 * rng.normal();
  const auto rows = spectrum_histogram_export(field_spectrum(g, s, 1.0), -50.0);
  std::stringstream buf;
  write_spectrum_csv(buf, rows);
  const std::string text = buf.str();
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(read_spectrum_csv(buf), rows);
}

TEST(SpectrumExport, RejectsMalformedCsv) {
  std::stringstream bad_header("r,i,c\n1,2,0\n");
  EXPECT_THROW(read_spectrum_csv(bad_header), std::invalid_argument);
  std::stringstream bad_flag("re,im,clipped\n1,2,5\n");
  EXPECT_THROW(read_spectrum_csv(bad_flag), std::invalid_argument);
}
