#pragma once

// Local convergence diagnostics: fixed-point classification through the
// spectrum of the step map's Jacobian, field spectra with and without the
// consensus term, the imaginary-to-real quotient bound, and rate fitting.

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nashkit/csv.hpp"
#include "nashkit/densela.hpp"
#include "nashkit/game.hpp"
#include "nashkit/optimizers.hpp"
#include "nashkit/random.hpp"

namespace nashkit {

enum class FixedPointClass { attracting, repelling_or_saddle, marginal };

inline const char* to_string(FixedPointClass c) {
  switch (c) {
    case FixedPointClass::attracting: return "attracting";
    case FixedPointClass::repelling_or_saddle: return "repelling-or-saddle";
    case FixedPointClass::marginal: return "marginal";
  }
  return "?";
}

inline constexpr double marginal_band = 1e-6;

struct FixedPointReport {
  bool is_fixed = false;
  double residual = 0.0;
  Spectrum step_jacobian_spectrum;                // empty unless is_fixed
  std::optional<FixedPointClass> classification;  // set only when is_fixed
  double predicted_rate = 0.0;                    // spectral radius of F′
};

inline FixedPointClass classify_radius(double radius) {
  if (std::abs(radius - 1.0) < marginal_band) return FixedPointClass::marginal;
  return radius < 1.0 ? FixedPointClass::attracting : FixedPointClass::repelling_or_saddle;
}

/// Spectrum of the finite-difference Jacobian of the full step map at a
/// stationary point (momentum and rescaling accumulators set to zero).
inline FixedPointReport classify_fixed_point(const StepRule& rule, const TwoPlayerGame& game, const GameState& s,
                                             double tol) {
  FixedPointReport report;
  report.residual = gradient_field(game, s).norm;
  if (!(report.residual < tol)) return report;
  report.is_fixed = true;
  const Vector z = augment(rule.rule, s.x);
  const Matrix jac = fd_jacobian(make_step_map(rule, game), z);
  report.step_jacobian_spectrum = eigenvalues(jac);
  report.predicted_rate = report.step_jacobian_spectrum.spectral_radius;
  report.classification = classify_radius(report.predicted_rate);
  return report;
}

/// Eigenvalues of v′(x) for γ = 0, of w′(x) for γ > 0.
inline Spectrum field_spectrum(const TwoPlayerGame& game, const GameState& s, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("field_spectrum: gamma must be non-negative");
  for (double xi : s.x)
    if (!std::isfinite(xi)) throw std::invalid_argument("field_spectrum: non-finite state");
  return eigenvalues(gamma == 0.0 ? jacobian(game, s) : consensus_jacobian(game, s, gamma));
}

struct QuotientBoundReport {
  double gamma = 0.0;
  Quotient q_observed;
  double rho = 0.0;
  double bound_weak = 0.0;  // 1/(2ρ²γ)
  bool holds = false;
  // ‖A - Aᵀ‖₂/(2ρ²γ): bounds q for every admissible A. It coincides with
  // bound_weak up to the factor ‖A - Aᵀ‖₂, so bound_weak can fail when the
  // antisymmetric part is large (A = [[0,1],[-1,0]], γ = 1 gives q = 1).
  double bound_skew = 0.0;
  // Sampled estimate of min |v̄ᵀ(A+Aᵀ)v| / |v̄ᵀ(A-Aᵀ)v| over unit v; informational only.
  std::optional<double> c_estimate;
};

inline constexpr double quotient_bound_slack = 1e-9;

/// Compares the quotient q of A - γAᵀA against 1/(2ρ²γ), the c ≥ 0
/// relaxation of the bound 1/(c + 2ρ²γ). A needs a negative semidefinite
/// symmetric part and must be invertible.
inline QuotientBoundReport quotient_bound_check(const Matrix& a, double gamma, std::size_t c_samples = 10000,
                                                std::uint64_t seed = 0) {
  if (!a.square()) throw std::invalid_argument("quotient_bound_check: matrix must be square");
  if (!(gamma > 0.0)) throw std::invalid_argument("quotient_bound_check: gamma must be positive");
  const double scale = a.frobenius_norm();
  if (is_negative_definite(a, std::max(default_definiteness_tol(a), 1e-12 * scale)) == Definiteness::indefinite)
    throw std::invalid_argument("quotient_bound_check: symmetric part is not negative semidefinite");
  QuotientBoundReport r;
  r.gamma = gamma;
  r.rho = min_singular_value(a);
  if (!(r.rho > 1e-12 * scale)) throw std::invalid_argument("quotient_bound_check: matrix is singular");
  r.q_observed = eigenvalues(a - gamma * (a.transpose() * a)).quotient_q;
  r.bound_weak = 1.0 / (2.0 * r.rho * r.rho * gamma);
  r.holds = r.q_observed <= r.bound_weak + quotient_bound_slack;
  r.bound_skew = singular_values(a - a.transpose()).back() * r.bound_weak;

  if (c_samples > 0) {
    const Matrix sym = a + a.transpose();
    const Matrix skew = a - a.transpose();
    const std::size_t n = a.rows();
    Rng rng(seed);
    std::vector<Complex> v(n);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c_samples; ++k) {
      for (auto& vi : v) vi = Complex(rng.normal(), rng.normal());
      auto form = [&](const Matrix& m) {
        Complex acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          Complex row = 0.0;
          for (std::size_t j = 0; j < n; ++j) row += m(i, j) * v[j];
          acc += std::conj(v[i]) * row;
        }
        return std::abs(acc);
      };
      const double den = form(skew);
      if (den == 0.0) continue;
      best = std::min(best, form(sym) / den);
    }
    if (std::isfinite(best)) r.c_estimate = best;
  }
  return r;
}

/// Least-squares slope of ys against their index 0, 1, 2, ...
inline double index_slope(std::span<const double> ys) {
  const double n = static_cast<double>(ys.size());
  if (ys.size() < 2) throw std::invalid_argument("index_slope: need at least two points");
  const double mean_k = (n - 1.0) / 2.0;
  double mean_y = 0.0;
  for (double y : ys) mean_y += y;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const double dk = static_cast<double>(k) - mean_k;
    sxy += dk * (ys[k] - mean_y);
    sxx += dk * dk;
  }
  return sxy / sxx;
}

class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Per-step contraction factor from a least-squares fit of log‖x_k - x̄‖
/// against k. Requires at least 10 points and a non-increasing tail.
inline double fit_convergence_rate(std::span<const Vector> trajectory, std::span<const double> target) {
  if (trajectory.size() < 10) throw FitError("fit_convergence_rate: need at least 10 points");
  std::vector<double> log_err;
  log_err.reserve(trajectory.size());
  for (const Vector& x : trajectory) {
    if (x.size() != target.size()) throw std::invalid_argument("fit_convergence_rate: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - target[i]) * (x[i] - target[i]);
    if (!(s > 0.0) || !std::isfinite(s)) break;
    log_err.push_back(0.5 * std::log(s));
  }
  if (log_err.size() < 10) throw FitError("fit_convergence_rate: fewer than 10 usable (non-zero, finite) errors");
  for (std::size_t k = log_err.size() / 2 + 1; k < log_err.size(); ++k)
    if (log_err[k] > log_err[k - 1]) throw FitError("fit_convergence_rate: error is not decreasing in the tail");
  return std::exp(index_slope(log_err));
}

struct SpectrumRow {
  double re = 0.0;
  double im = 0.0;
  bool clipped = false;

  friend bool operator==(const SpectrumRow&, const SpectrumRow&) = default;
};

/// One row per eigenvalue in spectrum order; real parts below clip_real are
/// raised to it and flagged.
inline std::vector<SpectrumRow> spectrum_histogram_export(const Spectrum& spec,
                                                          std::optional<double> clip_real = std::nullopt) {
  std::vector<SpectrumRow> rows;
  rows.reserve(spec.eigenvalues.size());
  for (const Complex& l : spec.eigenvalues) {
    SpectrumRow r{l.real(), l.imag(), false};
    if (clip_real && r.re < *clip_real) {
      r.re = *clip_real;
      r.clipped = true;
    }
    rows.push_back(r);
  }
  return rows;
}

inline constexpr const char* spectrum_csv_header = "re,im,clipped";

inline void write_spectrum_csv(std::ostream& out, std::span<const SpectrumRow> rows) {
  out << spectrum_csv_header << '\n';
  for (const SpectrumRow& r : rows) out << csv::real(r.re) << ',' << csv::real(r.im) << ',' << (r.clipped ? 1 : 0) << '\n';
}

inline std::vector<SpectrumRow> read_spectrum_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != spectrum_csv_header)
    throw std::invalid_argument("spectrum csv: missing or wrong header");
  std::vector<SpectrumRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != 3 || (cells[2] != "0" && cells[2] != "1"))
      throw std::invalid_argument("spectrum csv: malformed row: " + line);
    rows.push_back({csv::parse_real(cells[0]), csv::parse_real(cells[1]), cells[2] == "1"});
  }
  return rows;
}

}  // namespace nashkit
