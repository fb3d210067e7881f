#pragma once

// Smooth two-player games over a split parameter vector x = (φ, θ): player 1
// maximizes f over φ, player 2 maximizes g over θ.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nashkit/autodiff.hpp"
#include "nashkit/densela.hpp"

namespace nashkit {

struct GameState {
  Vector x;
  std::size_t split = 0;

  GameState() = default;
  GameState(Vector x_, std::size_t split_) : x(std::move(x_)), split(split_) {
    if (split == 0 || split >= x.size()) throw std::invalid_argument("GameState: split must satisfy 0 < split < dim");
  }

  std::size_t dim() const { return x.size(); }
  std::span<const double> phi() const { return std::span<const double>(x).first(split); }
  std::span<const double> theta() const { return std::span<const double>(x).subspan(split); }
};

struct UtilityPair {
  ad::Var f;
  ad::Var g;
};

struct FieldEval {
  Vector v;
  double norm = 0.0;

  static FieldEval from(Vector v) {
    FieldEval e;
    e.norm = norm2(v);
    e.v = std::move(v);
    return e;
  }
};

class TwoPlayerGame {
public:
  using Utility = ad::ScalarFn;
  using Payoff = std::function<UtilityPair(ad::Tape&, std::span<const ad::Var>)>;

  /// Zero-sum game; only f is stored and g is always -f.
  static TwoPlayerGame zero_sum(std::size_t dim, std::size_t split, Utility f) {
    TwoPlayerGame game(dim, split);
    game.zero_sum_ = true;
    game.f_ = std::move(f);
    return game;
  }

  static TwoPlayerGame general(std::size_t dim, std::size_t split, Utility f, Utility g) {
    return general(dim, split, [f = std::move(f), g = std::move(g)](ad::Tape& t, std::span<const ad::Var> x) {
      return UtilityPair{f(t, x), g(t, x)};
    });
  }

  /// General game whose utilities share one recorded forward pass.
  static TwoPlayerGame general(std::size_t dim, std::size_t split, Payoff fg) {
    TwoPlayerGame game(dim, split);
    game.payoff_ = std::move(fg);
    return game;
  }

  bool is_zero_sum() const { return zero_sum_; }
  std::size_t dim() const { return dim_; }
  std::size_t split() const { return split_; }

  UtilityPair payoff(ad::Tape& tape, std::span<const ad::Var> x) const {
    check_dim(x.size());
    if (zero_sum_) {
      const ad::Var f = f_(tape, x);
      return {f, -f};
    }
    return payoff_(tape, x);
  }

  /// v(x) = (∇_φ f, ∇_θ g) recorded on the tape, given already-recorded utilities.
  std::vector<ad::Var> field_graph(ad::Tape& tape, std::span<const ad::Var> x, const UtilityPair& u) const {
    if (zero_sum_) {
      std::vector<ad::Var> v = tape.gradient_graph(u.f, x);
      for (std::size_t i = split_; i < v.size(); ++i) v[i] = -v[i];
      return v;
    }
    std::vector<ad::Var> v = tape.gradient_graph(u.f, x.first(split_));
    std::vector<ad::Var> gg = tape.gradient_graph(u.g, x.subspan(split_));
    v.insert(v.end(), gg.begin(), gg.end());
    return v;
  }

  std::vector<ad::Var> field_graph(ad::Tape& tape, std::span<const ad::Var> x) const {
    return field_graph(tape, x, payoff(tape, x));
  }

  /// v(x) as numbers, single reverse sweep per player.
  Vector field(std::span<const double> x) const {
    ad::Tape tape;
    const std::vector<ad::Var> in = tape.inputs(x);
    const UtilityPair u = payoff(tape, in);
    const std::span<const ad::Var> all(in);
    Vector v;
    if (zero_sum_) {
      v = tape.gradient(u.f, all);
      for (std::size_t i = split_; i < v.size(); ++i) v[i] = -v[i];
    } else {
      v = tape.gradient(u.f, all.first(split_));
      const Vector gt = tape.gradient(u.g, all.subspan(split_));
      v.insert(v.end(), gt.begin(), gt.end());
    }
    check_finite(v);
    return v;
  }

  std::pair<double, double> utility_values(std::span<const double> x) const {
    ad::Tape tape;
    const std::vector<ad::Var> in = tape.inputs(x);
    const UtilityPair u = payoff(tape, in);
    return {u.f.value(), u.g.value()};
  }

  /// v(x) together with ∇L(x) = v′(x)ᵀ v(x) by double backpropagation.
  ad::FieldAndLossGradient field_and_loss_gradient(std::span<const double> x) const {
    auto out = ad::grad_norm_grad(
        [this](ad::Tape& tape, std::span<const ad::Var> in) { return field_graph(tape, in); }, x);
    check_finite(out.v);
    check_finite(out.grad_loss);
    return out;
  }

private:
  TwoPlayerGame(std::size_t dim, std::size_t split) : dim_(dim), split_(split) {
    if (split == 0 || split >= dim) throw std::invalid_argument("TwoPlayerGame: split must satisfy 0 < split < dim");
  }

  void check_dim(std::size_t n) const {
    if (n != dim_) throw std::invalid_argument("TwoPlayerGame: state dimension mismatch");
  }

  static void check_finite(const Vector& v) {
    for (double d : v)
      if (!std::isfinite(d)) throw std::domain_error("TwoPlayerGame: non-finite field value");
  }

  std::size_t dim_ = 0;
  std::size_t split_ = 0;
  bool zero_sum_ = false;
  Utility f_;
  Payoff payoff_;
};

inline void check_state(const TwoPlayerGame& game, const GameState& s) {
  if (s.dim() != game.dim() || s.split != game.split())
    throw std::invalid_argument("game state does not match game dimensions");
}

inline FieldEval gradient_field(const TwoPlayerGame& game, const GameState& s) {
  check_state(game, s);
  return FieldEval::from(game.field(s.x));
}

/// w(x) = v(x) - γ ∇L(x).
inline Vector consensus_field(const TwoPlayerGame& game, std::span<const double> x, double gamma) {
  if (gamma == 0.0) return game.field(x);
  auto [v, gl] = game.field_and_loss_gradient(x);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= gamma * gl[i];
  return v;
}

/// Modified utilities f - γL and g - γL with L = ½‖v‖². The result is a
/// general (non-zero-sum) game whose field is w = v - γ v′ᵀ v.
inline TwoPlayerGame consensus_modified_game(const TwoPlayerGame& game, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("consensus_modified_game: gamma must be positive");
  auto base = std::make_shared<const TwoPlayerGame>(game);
  return TwoPlayerGame::general(
      game.dim(), game.split(), [base, gamma](ad::Tape& tape, std::span<const ad::Var> x) {
        const UtilityPair u = base->payoff(tape, x);
        const std::vector<ad::Var> v = base->field_graph(tape, x, u);
        std::vector<ad::Var> sq;
        sq.reserve(v.size());
        for (const ad::Var& vi : v) sq.push_back(ad::square(vi));
        const ad::Var penalty = ad::sum(sq) * (0.5 * gamma);
        return UtilityPair{u.f - penalty, u.g - penalty};
      });
}

enum class JacobianMethod {
  autodiff_fd,  // central differences of the autodiff field
  fd,           // central differences of a finite-difference field
};

namespace detail {

inline Vector fd_field(const TwoPlayerGame& game, std::span<const double> x, double scale) {
  Vector xp(x.begin(), x.end());
  Vector v(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double delta = scale * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + delta;
    const auto up = game.utility_values(xp);
    xp[j] = x[j] - delta;
    const auto dn = game.utility_values(xp);
    xp[j] = x[j];
    const double fp = j < game.split() ? up.first : up.second;
    const double fm = j < game.split() ? dn.first : dn.second;
    v[j] = (fp - fm) / (2.0 * delta);
  }
  return v;
}

}  // namespace detail

/// v′(x) by finite differences of the field.
inline Matrix jacobian(const TwoPlayerGame& game, const GameState& s,
                       JacobianMethod method = JacobianMethod::autodiff_fd) {
  check_state(game, s);
  if (method == JacobianMethod::autodiff_fd)
    return fd_jacobian([&game](std::span<const double> x) { return game.field(x); }, s.x);
  // nested differences: balance truncation against the squared round-off
  const double scale = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return fd_jacobian([&game, scale](std::span<const double> x) { return detail::fd_field(game, x, scale); }, s.x,
                     scale);
}

/// Jacobian of w = v - γ∇L, by finite differences over the double-backprop field.
inline Matrix consensus_jacobian(const TwoPlayerGame& game, const GameState& s, double gamma) {
  check_state(game, s);
  return fd_jacobian([&game, gamma](std::span<const double> x) { return consensus_field(game, x, gamma); }, s.x);
}

inline Matrix block(const Matrix& m, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) {
  Matrix b(nr, nc);
  for (std::size_t i = 0; i < nr; ++i)
    for (std::size_t j = 0; j < nc; ++j) b(i, j) = m(r0 + i, c0 + j);
  return b;
}

enum class NashVerdict { nash_certified, not_nash, inconclusive };

inline const char* to_string(NashVerdict v) {
  switch (v) {
    case NashVerdict::nash_certified: return "nash-certified";
    case NashVerdict::not_nash: return "not-nash";
    case NashVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

/// Second-order test at a candidate point of a zero-sum game. Certifies only
/// a stationary point with negative definite v′; reports not-nash when the
/// point is not stationary or a player's own Hessian has the wrong sign.
inline NashVerdict local_nash_check(const TwoPlayerGame& game, const GameState& s, double tol) {
  if (!game.is_zero_sum()) throw std::invalid_argument("local_nash_check: requires a zero-sum game");
  const FieldEval fe = gradient_field(game, s);
  if (fe.norm > tol) return NashVerdict::not_nash;

  const Matrix jac = jacobian(game, s);
  const double def_tol = std::max(default_definiteness_tol(jac), 1e-7 * jac.frobenius_norm());
  const std::size_t n1 = s.split;
  const std::size_t n2 = s.dim() - s.split;
  // top-left = ∇²_φ f must be NSD, bottom-right = -∇²_θ f must be NSD
  const Matrix h_phi = block(jac, 0, 0, n1, n1);
  const Matrix h_theta = block(jac, n1, n1, n2, n2);
  if (is_negative_definite(h_phi, def_tol) == Definiteness::indefinite ||
      is_negative_definite(h_theta, def_tol) == Definiteness::indefinite)
    return NashVerdict::not_nash;
  if (is_negative_definite(jac, def_tol) == Definiteness::definite) return NashVerdict::nash_certified;
  return NashVerdict::inconclusive;
}

/// Stationarity and per-player Hessian signs for general games, where no
/// certification is attempted.
struct PlayerBlockReport {
  double residual = 0.0;
  Definiteness player1_hessian = Definiteness::indefinite;  // ∇²_φ f, negative sense
  Definiteness player2_hessian = Definiteness::indefinite;  // ∇²_θ g, negative sense
};

inline PlayerBlockReport player_block_report(const TwoPlayerGame& game, const GameState& s) {
  const FieldEval fe = gradient_field(game, s);
  const Matrix jac = jacobian(game, s);
  const double def_tol = std::max(default_definiteness_tol(jac), 1e-7 * jac.frobenius_norm());
  const std::size_t n1 = s.split;
  const std::size_t n2 = s.dim() - s.split;
  return PlayerBlockReport{fe.norm, is_negative_definite(block(jac, 0, 0, n1, n1), def_tol),
                           is_negative_definite(block(jac, n1, n1, n2, n2), def_tol)};
}

}  // namespace nashkit
