#pragma once

// Reverse-mode automatic differentiation on an append-only tape.
//
// Gradients can be taken in two ways: `Tape::gradient` returns plain numbers,
// `Tape::gradient_graph` records the adjoint computation itself on the tape so
// the result can be differentiated again (double backpropagation).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nashkit::ad {

using Vector = std::vector<double>;

enum class Op : std::uint8_t {
  input,
  constant,
  add,
  sub,
  mul,
  div,
  neg,
  scale,  // a * c
  shift,  // a + c
  add_scaled,  // a + c * b
  exp,
  log,
  tanh,
  relu,
  sigmoid,
  log_sigmoid,
  square,
};

struct Node {
  Op op;
  std::uint32_t a;
  std::uint32_t b;
  double value;
  double c;
};

inline constexpr std::uint32_t no_parent = std::numeric_limits<std::uint32_t>::max();

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log σ(x) = -log(1 + e^{-x}), branched to avoid overflow on either side.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace detail

class Tape;

class Var {
public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  double value() const;
  std::uint32_t index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t n) { nodes_.reserve(n); }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t i) const { return nodes_[i]; }

  Var input(double v) { return push(Op::input, no_parent, no_parent, v); }
  std::vector<Var> inputs(std::span<const double> xs) {
    std::vector<Var> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(input(x));
    return out;
  }
  Var constant(double v) { return push(Op::constant, no_parent, no_parent, v); }

  Var push(Op op, std::uint32_t a, std::uint32_t b, double value, double c = 0.0) {
    if (nodes_.size() >= no_parent) throw std::length_error("Tape: node limit reached");
    nodes_.push_back(Node{op, a, b, value, c});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  double value(std::uint32_t i) const { return nodes_[i].value; }

  /// d out / d wrt as plain numbers.
  Vector gradient(Var out, std::span<const Var> wrt) const;

  /// d out / d wrt as tape expressions (differentiable again).
  std::vector<Var> gradient_graph(Var out, std::span<const Var> wrt);

private:
  std::vector<Node> nodes_;
};

inline double Var::value() const { return tape_->value(index_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw std::invalid_argument("ad: operands live on different tapes");
  return *a.tape();
}

}  // namespace detail

inline Var operator+(Var a, Var b) {
  return detail::same_tape(a, b).push(Op::add, a.index(), b.index(), a.value() + b.value());
}
inline Var operator-(Var a, Var b) {
  return detail::same_tape(a, b).push(Op::sub, a.index(), b.index(), a.value() - b.value());
}
inline Var operator*(Var a, Var b) {
  return detail::same_tape(a, b).push(Op::mul, a.index(), b.index(), a.value() * b.value());
}
inline Var operator/(Var a, Var b) {
  const double d = b.value();
  if (d == 0.0) throw std::domain_error("ad: division by zero");
  return detail::same_tape(a, b).push(Op::div, a.index(), b.index(), a.value() / d);
}
inline Var operator-(Var a) { return a.tape()->push(Op::neg, a.index(), no_parent, -a.value()); }
inline Var operator*(Var a, double c) { return a.tape()->push(Op::scale, a.index(), no_parent, a.value() * c, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) {
  if (c == 0.0) throw std::domain_error("ad: division by zero");
  return a * (1.0 / c);
}
inline Var operator+(Var a, double c) { return a.tape()->push(Op::shift, a.index(), no_parent, a.value() + c, c); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a + (-c); }
/// a + c·b as a single node.
inline Var add_scaled(Var a, double c, Var b) {
  return detail::same_tape(a, b).push(Op::add_scaled, a.index(), b.index(), a.value() + c * b.value(), c);
}
inline Var operator-(double c, Var a) { return (-a) + c; }

inline Var exp(Var a) { return a.tape()->push(Op::exp, a.index(), no_parent, std::exp(a.value())); }
inline Var log(Var a) {
  if (!(a.value() > 0.0)) throw std::domain_error("ad: log of non-positive value");
  return a.tape()->push(Op::log, a.index(), no_parent, std::log(a.value()));
}
inline Var tanh(Var a) { return a.tape()->push(Op::tanh, a.index(), no_parent, std::tanh(a.value())); }
/// Subgradient 0 at the kink.
inline Var relu(Var a) { return a.tape()->push(Op::relu, a.index(), no_parent, a.value() > 0.0 ? a.value() : 0.0); }
inline Var sigmoid(Var a) { return a.tape()->push(Op::sigmoid, a.index(), no_parent, detail::sigmoid(a.value())); }
inline Var log_sigmoid(Var a) {
  return a.tape()->push(Op::log_sigmoid, a.index(), no_parent, detail::log_sigmoid(a.value()));
}
inline Var square(Var a) { return a.tape()->push(Op::square, a.index(), no_parent, a.value() * a.value()); }

inline Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("ad: sum of empty range");
  Var s = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) s = s + xs[i];
  return s;
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("ad: dot size mismatch");
  Var s = a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) s = s + a[i] * b[i];
  return s;
}

inline Var dot(std::span<const Var> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("ad: dot size mismatch");
  Var s = a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) s = add_scaled(s, b[i], a[i]);
  return s;
}

inline Vector Tape::gradient(Var out, std::span<const Var> wrt) const {
  if (out.tape() != this) throw std::invalid_argument("Tape::gradient: output not on this tape");
  Vector adj(out.index() + 1, 0.0);
  adj[out.index()] = 1.0;
  for (std::uint32_t i = out.index() + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::input:
      case Op::constant:
        break;
      case Op::add:
        adj[n.a] += g;
        adj[n.b] += g;
        break;
      case Op::sub:
        adj[n.a] += g;
        adj[n.b] -= g;
        break;
      case Op::mul:
        adj[n.a] += g * nodes_[n.b].value;
        adj[n.b] += g * nodes_[n.a].value;
        break;
      case Op::div:
        adj[n.a] += g / nodes_[n.b].value;
        adj[n.b] -= g * n.value / nodes_[n.b].value;
        break;
      case Op::neg:
        adj[n.a] -= g;
        break;
      case Op::scale:
        adj[n.a] += g * n.c;
        break;
      case Op::shift:
        adj[n.a] += g;
        break;
      case Op::add_scaled:
        adj[n.a] += g;
        adj[n.b] += g * n.c;
        break;
      case Op::exp:
        adj[n.a] += g * n.value;
        break;
      case Op::log:
        adj[n.a] += g / nodes_[n.a].value;
        break;
      case Op::tanh:
        adj[n.a] += g * (1.0 - n.value * n.value);
        break;
      case Op::relu:
        if (nodes_[n.a].value > 0.0) adj[n.a] += g;
        break;
      case Op::sigmoid:
        adj[n.a] += g * n.value * (1.0 - n.value);
        break;
      case Op::log_sigmoid:
        adj[n.a] += g * detail::sigmoid(-nodes_[n.a].value);
        break;
      case Op::square:
        adj[n.a] += g * 2.0 * nodes_[n.a].value;
        break;
    }
  }
  Vector out_grad(wrt.size(), 0.0);
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    if (wrt[k].tape() != this) throw std::invalid_argument("Tape::gradient: variable not on this tape");
    if (wrt[k].index() <= out.index()) out_grad[k] = adj[wrt[k].index()];
  }
  return out_grad;
}

inline std::vector<Var> Tape::gradient_graph(Var out, std::span<const Var> wrt) {
  if (out.tape() != this) throw std::invalid_argument("Tape::gradient_graph: output not on this tape");
  constexpr std::uint32_t none = no_parent;
  std::vector<std::uint32_t> adj(out.index() + 1, none);
  adj[out.index()] = constant(1.0).index();

  auto accumulate = [this, &adj](std::uint32_t target, Var contribution) {
    if (adj[target] == none) {
      adj[target] = contribution.index();
    } else {
      adj[target] = (Var(this, adj[target]) + contribution).index();
    }
  };

  for (std::uint32_t i = out.index() + 1; i-- > 0;) {
    if (adj[i] == none) continue;
    const Var g(this, adj[i]);
    const Node n = nodes_[i];  // copy: pushes below may reallocate
    const Var self(this, i);
    switch (n.op) {
      case Op::input:
      case Op::constant:
        break;
      case Op::add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::sub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::mul:
        accumulate(n.a, g * Var(this, n.b));
        accumulate(n.b, g * Var(this, n.a));
        break;
      case Op::div: {
        const Var b(this, n.b);
        accumulate(n.a, g / b);
        accumulate(n.b, -((g * self) / b));
        break;
      }
      case Op::neg:
        accumulate(n.a, -g);
        break;
      case Op::scale:
        accumulate(n.a, g * n.c);
        break;
      case Op::shift:
        accumulate(n.a, g);
        break;
      case Op::add_scaled:
        accumulate(n.a, g);
        accumulate(n.b, g * n.c);
        break;
      case Op::exp:
        accumulate(n.a, g * self);
        break;
      case Op::log:
        accumulate(n.a, g / Var(this, n.a));
        break;
      case Op::tanh:
        accumulate(n.a, g * (1.0 - square(self)));
        break;
      case Op::relu:
        if (nodes_[n.a].value > 0.0) accumulate(n.a, g);
        break;
      case Op::sigmoid:
        accumulate(n.a, g * (self * (1.0 - self)));
        break;
      case Op::log_sigmoid:
        accumulate(n.a, g * sigmoid(-Var(this, n.a)));
        break;
      case Op::square:
        accumulate(n.a, g * (Var(this, n.a) * 2.0));
        break;
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.tape() != this) throw std::invalid_argument("Tape::gradient_graph: variable not on this tape");
    if (w.index() <= out.index() && adj[w.index()] != none) {
      result.emplace_back(this, adj[w.index()]);
    } else {
      result.push_back(constant(0.0));
    }
  }
  return result;
}

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using FieldBuilder = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

inline Vector grad(const ScalarFn& fn, std::span<const double> x) {
  Tape tape;
  const std::vector<Var> in = tape.inputs(x);
  const Var out = fn(tape, in);
  return tape.gradient(out, in);
}

struct FieldAndLossGradient {
  Vector v;
  Vector grad_loss;  // ∇(½‖v‖²) = v′ᵀ v
};

/// Evaluates v(x) and ∇L(x) with L = ½‖v‖², differentiating through the
/// recorded field expression.
inline FieldAndLossGradient grad_norm_grad(const FieldBuilder& field, std::span<const double> x) {
  Tape tape;
  const std::vector<Var> in = tape.inputs(x);
  const std::vector<Var> v = field(tape, in);
  FieldAndLossGradient out;
  out.v.reserve(v.size());
  for (const Var& vi : v) out.v.push_back(vi.value());
  if (v.empty()) {
    out.grad_loss.assign(x.size(), 0.0);
    return out;
  }
  std::vector<Var> squares;
  squares.reserve(v.size());
  for (const Var& vi : v) squares.push_back(square(vi));
  const Var loss = sum(squares) * 0.5;
  out.grad_loss = tape.gradient(loss, in);
  return out;
}

}  // namespace nashkit::ad
