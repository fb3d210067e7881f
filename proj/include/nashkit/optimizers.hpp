#pragma once

// Fixed-point iterations x ← x + h·G(x) for two-player games. Every step is a
// pure function of (game, state, hyperparameters).

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nashkit/densela.hpp"
#include "nashkit/game.hpp"

namespace nashkit {

struct HyperParams {
  double h = 0.1;
  double gamma = 0.0;
  double alpha = 0.1;
  double epsilon = 1e-8;
  double momentum_gamma = 0.0;

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("HyperParams: h must be positive");
    if (!(gamma >= 0.0)) throw std::invalid_argument("HyperParams: gamma must be non-negative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("HyperParams: alpha must lie in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("HyperParams: epsilon must be positive");
    if (!(momentum_gamma >= 0.0)) throw std::invalid_argument("HyperParams: momentum_gamma must be non-negative");
  }
};

struct SimpleState {
  GameState x;
};

struct MomentumState {
  GameState x;
  Vector m;
};

struct RescaledState {
  GameState x;
  double beta = 0.0;
};

namespace detail {

inline void require_positive_step(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("step size h must be positive");
}

inline GameState axpy(const GameState& s, double h, std::span<const double> dir) {
  GameState out = s;
  for (std::size_t i = 0; i < out.x.size(); ++i) out.x[i] += h * dir[i];
  return out;
}

}  // namespace detail

/// Simultaneous gradient ascent: both players move from the same iterate.
inline SimpleState simga_step(const TwoPlayerGame& game, const SimpleState& s, double h) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  return {detail::axpy(s.x, h, game.field(s.x.x))};
}

/// Alternating gradient ascent: φ moves first, θ then sees the new φ.
inline SimpleState altga_step(const TwoPlayerGame& game, const SimpleState& s, double h) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  GameState next = s.x;
  const Vector v1 = game.field(next.x);
  for (std::size_t i = 0; i < next.split; ++i) next.x[i] += h * v1[i];
  const Vector v2 = game.field(next.x);
  for (std::size_t i = next.split; i < next.dim(); ++i) next.x[i] += h * v2[i];
  return {next};
}

/// x ← x + h·(v(x) - γ∇L(x)).
inline SimpleState consensus_step(const TwoPlayerGame& game, const SimpleState& s, double h, double gamma) {
  detail::require_positive_step(h);
  if (!(gamma >= 0.0)) throw std::invalid_argument("consensus_step: gamma must be non-negative");
  check_state(game, s.x);
  return {detail::axpy(s.x, h, consensus_field(game, s.x.x, gamma))};
}

/// Consensus penalty on the second player only.
inline SimpleState smoothing_step(const TwoPlayerGame& game, const SimpleState& s, double h, double gamma) {
  detail::require_positive_step(h);
  if (!(gamma >= 0.0)) throw std::invalid_argument("smoothing_step: gamma must be non-negative");
  check_state(game, s.x);
  if (gamma == 0.0) return simga_step(game, s, h);
  auto [v, gl] = game.field_and_loss_gradient(s.x.x);
  for (std::size_t i = s.x.split; i < v.size(); ++i) v[i] -= gamma * gl[i];
  return {detail::axpy(s.x, h, v)};
}

/// (x, m) ← (x, m) + h·(m, v(x) - γm), with friction γ = momentum_gamma.
inline MomentumState momentum_step(const TwoPlayerGame& game, const MomentumState& s, double h,
                                   double momentum_gamma) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  if (s.m.size() != s.x.dim()) throw std::invalid_argument("momentum_step: momentum buffer has wrong size");
  const Vector v = game.field(s.x.x);
  MomentumState out = s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.x.x[i] = s.x.x[i] + h * s.m[i];
    out.m[i] = s.m[i] + h * (v[i] - momentum_gamma * s.m[i]);
  }
  return out;
}

namespace detail {

inline RescaledState rescale_update(const RescaledState& s, const Vector& dir, double h, double alpha, double epsilon) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("rescaled step: alpha must lie in (0,1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("rescaled step: epsilon must be positive");
  // β may dip below zero only under finite-difference probing of the step map
  if (!(s.beta + epsilon > 0.0)) throw std::invalid_argument("rescaled step: beta + epsilon must be positive");
  RescaledState out;
  out.x = axpy(s.x, h / std::sqrt(s.beta + epsilon), dir);
  const double n = norm2(dir);
  out.beta = (1.0 - alpha) * s.beta + alpha * n * n;
  return out;
}

}  // namespace detail

/// Global gradient rescaling: x ← x + h/√(β+ε)·v(x), β ← (1-α)β + α‖v(x)‖².
inline RescaledState rescaled_step(const TwoPlayerGame& game, const RescaledState& s, double h, double alpha,
                                   double epsilon) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  return detail::rescale_update(s, game.field(s.x.x), h, alpha, epsilon);
}

/// rescaled_step driven by the consensus field w instead of v.
inline RescaledState rescaled_consensus_step(const TwoPlayerGame& game, const RescaledState& s, double h,
                                             double gamma, double alpha, double epsilon) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  return detail::rescale_update(s, consensus_field(game, s.x.x, gamma), h, alpha, epsilon);
}

using Preconditioner = std::function<Matrix(const GameState&)>;

/// x ← x + h·A(x)·v(x).
inline SimpleState preconditioned_step(const TwoPlayerGame& game, const SimpleState& s, double h,
                                       const Preconditioner& precond) {
  detail::require_positive_step(h);
  check_state(game, s.x);
  const Matrix a = precond(s.x);
  if (a.rows() != s.x.dim() || a.cols() != s.x.dim())
    throw std::invalid_argument("preconditioned_step: preconditioner has wrong shape");
  const Vector v = game.field(s.x.x);
  return {detail::axpy(s.x, h, a * v)};
}

/// A(x) = I - γ v′(x)ᵀ, under which preconditioned_step is consensus optimization.
inline Preconditioner consensus_preconditioner(const TwoPlayerGame& game, double gamma) {
  return [&game, gamma](const GameState& s) {
    Matrix a = jacobian(game, s).transpose();
    a *= -gamma;
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += 1.0;
    return a;
  };
}

/// Supremum of step sizes h for which every |1 + hλ| < 1:
/// min over λ of 2|Re λ| / |λ|². Requires every Re λ < 0.
inline double max_stable_step(const Spectrum& spec) {
  if (spec.eigenvalues.empty()) throw std::invalid_argument("max_stable_step: empty spectrum");
  double best = std::numeric_limits<double>::infinity();
  for (const Complex& l : spec.eigenvalues) {
    if (!(l.real() < 0.0))
      throw std::domain_error("max_stable_step: eigenvalue with non-negative real part, no stable step exists");
    const double a = -l.real();
    const double ratio = l.imag() / l.real();
    best = std::min(best, (1.0 / a) * (2.0 / (1.0 + ratio * ratio)));
  }
  return best;
}

inline constexpr double default_step_safety = 0.9;

inline double safe_step(const Spectrum& spec, double safety = default_step_safety) {
  return safety * max_stable_step(spec);
}

enum class PenaltyMode { naive, debiased };

/// Mini-batch estimate of L = ½‖v‖² from per-example gradients. The naive
/// estimate is biased upward by tr(Cov)/(2B); the debiased one subtracts
/// 1/(2B-2) times the summed divisor-B sample variances.
inline double minibatch_penalty(std::span<const Vector> samples, PenaltyMode mode) {
  const std::size_t batch = samples.size();
  if (batch == 0) throw std::invalid_argument("minibatch_penalty: empty batch");
  if (mode == PenaltyMode::debiased && batch < 2)
    throw std::invalid_argument("minibatch_penalty: debiased mode needs at least two samples");
  const std::size_t dim = samples[0].size();
  Vector mean(dim, 0.0);
  for (const Vector& s : samples) {
    if (s.size() != dim) throw std::invalid_argument("minibatch_penalty: ragged samples");
    for (std::size_t j = 0; j < dim; ++j) mean[j] += s[j];
  }
  for (double& m : mean) m /= static_cast<double>(batch);
  const double naive = 0.5 * dot(mean, mean);
  if (mode == PenaltyMode::naive) return naive;
  double var_sum = 0.0;
  for (const Vector& s : samples)
    for (std::size_t j = 0; j < dim; ++j) var_sum += (s[j] - mean[j]) * (s[j] - mean[j]);
  var_sum /= static_cast<double>(batch);
  return naive - var_sum / (2.0 * static_cast<double>(batch) - 2.0);
}

// ---------------------------------------------------------------------------
// Step rules as maps on a flat augmented state, for Jacobian-of-step analysis
// and generic training loops. Layout: x, then m (momentum), then β (rescaled).

enum class Rule { simga, altga, consensus, smoothing, momentum, rescaled, rescaled_consensus, preconditioned };

inline const char* to_string(Rule r) {
  switch (r) {
    case Rule::simga: return "simga";
    case Rule::altga: return "altga";
    case Rule::consensus: return "consensus";
    case Rule::smoothing: return "smoothing";
    case Rule::momentum: return "momentum";
    case Rule::rescaled: return "rescaled";
    case Rule::rescaled_consensus: return "rescaled_consensus";
    case Rule::preconditioned: return "preconditioned";
  }
  return "?";
}

inline Rule rule_from_string(const std::string& s) {
  for (Rule r : {Rule::simga, Rule::altga, Rule::consensus, Rule::smoothing, Rule::momentum, Rule::rescaled,
                 Rule::rescaled_consensus, Rule::preconditioned})
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown optimizer rule: " + s);
}

struct StepRule {
  Rule rule = Rule::simga;
  HyperParams params;
  Preconditioner precond;  // only for Rule::preconditioned
};

inline std::size_t augmented_dim(Rule r, std::size_t n) {
  switch (r) {
    case Rule::momentum: return 2 * n;
    case Rule::rescaled:
    case Rule::rescaled_consensus: return n + 1;
    default: return n;
  }
}

/// Flat augmented state for x with zeroed auxiliary variables.
inline Vector augment(Rule r, std::span<const double> x) {
  Vector out(x.begin(), x.end());
  out.resize(augmented_dim(r, x.size()), 0.0);
  return out;
}

using StepMap = std::function<Vector(std::span<const double>)>;

inline Vector apply_rule(const StepRule& rule, const TwoPlayerGame& game, std::span<const double> z) {
  const std::size_t n = game.dim();
  if (z.size() != augmented_dim(rule.rule, n)) throw std::invalid_argument("apply_rule: augmented state has wrong size");
  const HyperParams& p = rule.params;
  GameState x(Vector(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n)), game.split());
  switch (rule.rule) {
    case Rule::simga: return simga_step(game, {x}, p.h).x.x;
    case Rule::altga: return altga_step(game, {x}, p.h).x.x;
    case Rule::consensus: return consensus_step(game, {x}, p.h, p.gamma).x.x;
    case Rule::smoothing: return smoothing_step(game, {x}, p.h, p.gamma).x.x;
    case Rule::preconditioned:
      if (!rule.precond) throw std::invalid_argument("apply_rule: preconditioned rule without preconditioner");
      return preconditioned_step(game, {x}, p.h, rule.precond).x.x;
    case Rule::momentum: {
      MomentumState s{x, Vector(z.begin() + static_cast<std::ptrdiff_t>(n), z.end())};
      const MomentumState next = momentum_step(game, s, p.h, p.momentum_gamma);
      Vector out = next.x.x;
      out.insert(out.end(), next.m.begin(), next.m.end());
      return out;
    }
    case Rule::rescaled:
    case Rule::rescaled_consensus: {
      const RescaledState s{x, z[n]};
      const RescaledState next = rule.rule == Rule::rescaled
                                     ? rescaled_step(game, s, p.h, p.alpha, p.epsilon)
                                     : rescaled_consensus_step(game, s, p.h, p.gamma, p.alpha, p.epsilon);
      Vector out = next.x.x;
      out.push_back(next.beta);
      return out;
    }
  }
  throw std::logic_error("apply_rule: unhandled rule");
}

inline StepMap make_step_map(StepRule rule, const TwoPlayerGame& game) {
  return [rule = std::move(rule), &game](std::span<const double> z) { return apply_rule(rule, game, z); };
}

}  // namespace nashkit
