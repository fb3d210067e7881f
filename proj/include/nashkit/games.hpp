#pragma once

// Benchmark games: closed-form bilinear and quadratic games with constant
// Jacobians, and a GAN on a circular mixture of Gaussians built from small
// ReLU MLPs.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashkit/autodiff.hpp"
#include "nashkit/densela.hpp"
#include "nashkit/game.hpp"
#include "nashkit/random.hpp"

namespace nashkit {

// ---------------------------------------------------------------------------
// Closed-form games

/// f(φ, θ) = φᵀ M θ, zero-sum.
struct BilinearGame {
  Matrix coupling;

  std::size_t phi_dim() const { return coupling.rows(); }
  std::size_t theta_dim() const { return coupling.cols(); }
  std::size_t dim() const { return phi_dim() + theta_dim(); }

  /// Constant Jacobian [[0, M], [-Mᵀ, 0]].
  Matrix field_jacobian() const {
    const std::size_t n1 = phi_dim(), n = dim();
    Matrix b(n, n);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < theta_dim(); ++j) {
        b(i, n1 + j) = coupling(i, j);
        b(n1 + j, i) = -coupling(i, j);
      }
    return b;
  }

  TwoPlayerGame game() const {
    const Matrix m = coupling;
    const std::size_t n1 = phi_dim();
    return TwoPlayerGame::zero_sum(dim(), n1, [m, n1](ad::Tape&, std::span<const ad::Var> x) {
      const auto phi = x.first(n1);
      const auto theta = x.subspan(n1);
      std::vector<ad::Var> terms;
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
          if (m(i, j) != 0.0) terms.push_back(phi[i] * theta[j] * m(i, j));
      if (terms.empty()) return phi[0] * 0.0;
      return ad::sum(terms);
    });
  }
};

/// f(φ, θ) = -(a/2)‖φ‖² + φᵀ M θ + (b/2)‖θ‖², zero-sum. The origin is a local
/// Nash equilibrium iff a > 0 and b > 0.
struct QuadraticGame {
  double a = 1.0;
  double b = 1.0;
  Matrix coupling;

  std::size_t phi_dim() const { return coupling.rows(); }
  std::size_t theta_dim() const { return coupling.cols(); }
  std::size_t dim() const { return phi_dim() + theta_dim(); }

  /// Constant Jacobian [[-aI, M], [-Mᵀ, -bI]].
  Matrix field_jacobian() const {
    Matrix j = BilinearGame{coupling}.field_jacobian();
    for (std::size_t i = 0; i < phi_dim(); ++i) j(i, i) = -a;
    for (std::size_t i = phi_dim(); i < dim(); ++i) j(i, i) = -b;
    return j;
  }

  TwoPlayerGame game() const {
    const Matrix m = coupling;
    const std::size_t n1 = phi_dim();
    const double qa = a, qb = b;
    return TwoPlayerGame::zero_sum(dim(), n1, [m, n1, qa, qb](ad::Tape&, std::span<const ad::Var> x) {
      const auto phi = x.first(n1);
      const auto theta = x.subspan(n1);
      std::vector<ad::Var> terms;
      for (const ad::Var& p : phi) terms.push_back(ad::square(p) * (-0.5 * qa));
      for (const ad::Var& t : theta) terms.push_back(ad::square(t) * (0.5 * qb));
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
          if (m(i, j) != 0.0) terms.push_back(phi[i] * theta[j] * m(i, j));
      return ad::sum(terms);
    });
  }
};

template <class LinearGame>
FieldEval analytic_field(const LinearGame& g, const GameState& s) {
  if (s.dim() != g.dim() || s.split != g.phi_dim()) throw std::invalid_argument("analytic_field: shape mismatch");
  return FieldEval::from(g.field_jacobian() * s.x);
}

// ---------------------------------------------------------------------------
// Multilayer perceptrons on the tape

/// Layer widths from input to output; hidden layers use ReLU, the output is
/// linear. Parameters are laid out per layer as W (out × in, row-major) then b.
struct MlpShape {
  std::vector<std::size_t> dims;

  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t layers() const { return dims.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * dims[l] + dims[l + 1];
    return n;
  }

  void validate() const {
    if (dims.size() < 2) throw std::invalid_argument("MlpShape: need at least input and output widths");
    for (std::size_t d : dims)
      if (d == 0) throw std::invalid_argument("MlpShape: zero width layer");
  }

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// He-style initialization: weights N(0, 2/fan_in), biases 0.
inline Vector init_mlp(const MlpShape& shape, Rng& rng) {
  shape.validate();
  Vector p;
  p.reserve(shape.param_count());
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    const std::size_t in = shape.dims[l], out = shape.dims[l + 1];
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t k = 0; k < in * out; ++k) p.push_back(sd * rng.normal());
    for (std::size_t k = 0; k < out; ++k) p.push_back(0.0);
  }
  return p;
}

namespace detail {

template <class In>
std::vector<ad::Var> mlp_layers(std::span<const ad::Var> params, const MlpShape& shape, std::span<const In> input) {
  if (params.size() != shape.param_count()) throw std::invalid_argument("mlp: parameter count mismatch");
  if (input.size() != shape.input_dim()) throw std::invalid_argument("mlp: input width mismatch");
  std::size_t off = 0;
  std::vector<ad::Var> h;
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    const std::size_t in = shape.dims[l], out = shape.dims[l + 1];
    const auto w = params.subspan(off, in * out);
    const auto b = params.subspan(off + in * out, out);
    off += in * out + out;
    std::vector<ad::Var> next;
    next.reserve(out);
    const bool last = l + 1 == shape.layers();
    for (std::size_t i = 0; i < out; ++i) {
      ad::Var s = b[i];
      for (std::size_t j = 0; j < in; ++j) {
        if constexpr (std::is_same_v<In, double>) {
          s = l == 0 ? ad::add_scaled(s, input[j], w[i * in + j]) : s + w[i * in + j] * h[j];
        } else {
          s = s + w[i * in + j] * (l == 0 ? input[j] : h[j]);
        }
      }
      next.push_back(last ? s : ad::relu(s));
    }
    h = std::move(next);
  }
  return h;
}

}  // namespace detail

inline std::vector<ad::Var> mlp_forward(std::span<const ad::Var> params, const MlpShape& shape,
                                        std::span<const double> input) {
  return detail::mlp_layers<double>(params, shape, input);
}

inline std::vector<ad::Var> mlp_forward(std::span<const ad::Var> params, const MlpShape& shape,
                                        std::span<const ad::Var> input) {
  return detail::mlp_layers<ad::Var>(params, shape, input);
}

inline Vector mlp_forward_values(std::span<const double> params, const MlpShape& shape, std::span<const double> input) {
  if (params.size() != shape.param_count()) throw std::invalid_argument("mlp: parameter count mismatch");
  if (input.size() != shape.input_dim()) throw std::invalid_argument("mlp: input width mismatch");
  std::size_t off = 0;
  Vector h(input.begin(), input.end());
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    const std::size_t in = shape.dims[l], out = shape.dims[l + 1];
    Vector next(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = params[off + in * out + i];
      for (std::size_t j = 0; j < in; ++j) s += params[off + i * in + j] * h[j];
      next[i] = (l + 1 == shape.layers() || s > 0.0) ? s : 0.0;
    }
    off += in * out + out;
    h = std::move(next);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Mixture of Gaussians target and GAN game

using Point2 = std::array<double, 2>;

/// Equal-weight isotropic Gaussians centred on the unit circle at angles 2πk/modes.
struct MoGTarget {
  std::size_t modes = 8;
  double sigma = 1e-2;

  Point2 mode(std::size_t k) const {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
    return {std::cos(t), std::sin(t)};
  }
};

inline std::vector<Point2> sample_target(const MoGTarget& target, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sample_target: n must be positive");
  if (target.modes == 0 || !(target.sigma >= 0.0)) throw std::invalid_argument("sample_target: invalid target");
  std::vector<Point2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 c = target.mode(rng.below(target.modes));
    const double dx = rng.normal(), dy = rng.normal();
    out.push_back({c[0] + target.sigma * dx, c[1] + target.sigma * dy});
  }
  return out;
}

/// Critic-output transforms. The critic is player 2 (θ), the generator player 1 (φ).
///   minimax_js:     critic g = E_p[log σ(t)] + E_q[log(1-σ(t))], generator f = -g
///   non_saturating: critic as above, generator f = E_q[log σ(t)]
///   indicator:      critic g = E_q[t] - E_p[t], generator f = -g
enum class Objective { minimax_js, non_saturating, indicator };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::minimax_js: return "minimax-js";
    case Objective::non_saturating: return "non-saturating";
    case Objective::indicator: return "indicator";
  }
  return "?";
}

inline Objective objective_from_string(const std::string& s) {
  for (Objective o : {Objective::minimax_js, Objective::non_saturating, Objective::indicator})
    if (s == to_string(o)) return o;
  if (s == "standard") return Objective::non_saturating;
  throw std::invalid_argument("unknown objective: " + s);
}

inline constexpr std::size_t default_batch = 64;

struct GanSpec {
  MlpShape generator{{16, 16, 16, 16, 16, 2}};
  MlpShape discriminator{{2, 16, 16, 16, 16, 1}};
  Objective objective = Objective::non_saturating;
  MoGTarget target;
  std::size_t batch = default_batch;

  std::size_t generator_params() const { return generator.param_count(); }
  std::size_t dim() const { return generator.param_count() + discriminator.param_count(); }
  std::size_t latent_dim() const { return generator.input_dim(); }

  void validate() const {
    generator.validate();
    discriminator.validate();
    if (generator.output_dim() != 2 || discriminator.input_dim() != 2 || discriminator.output_dim() != 1)
      throw std::invalid_argument("GanSpec: generator must emit 2-d points and the critic must map 2-d to 1-d");
    if (batch == 0) throw std::invalid_argument("GanSpec: batch must be positive");
  }
};

enum class Preset { paper, small };

inline Preset preset_from_string(const std::string& s) {
  if (s == "paper") return Preset::paper;
  if (s == "small") return Preset::small;
  throw std::invalid_argument("unknown preset: " + s);
}

inline const char* to_string(Preset p) { return p == Preset::paper ? "paper" : "small"; }

/// Architecture and target for a preset. paper: 4×16 ReLU nets, 16-d latent,
/// 8 modes. small: 2×8 nets and 4 modes for quick runs.
inline GanSpec gan_preset(Preset p) {
  GanSpec spec;
  if (p == Preset::small) {
    spec.generator = MlpShape{{4, 8, 8, 2}};
    spec.discriminator = MlpShape{{2, 8, 8, 1}};
    spec.target.modes = 4;
  }
  return spec;
}

/// Fresh parameters (generator, then critic) from a seed.
inline GameState gan_initial_state(const GanSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::derived({seed, 0x1417});
  Vector x = init_mlp(spec.generator, rng);
  const Vector d = init_mlp(spec.discriminator, rng);
  x.insert(x.end(), d.begin(), d.end());
  return GameState(std::move(x), spec.generator_params());
}

struct GanBatch {
  std::vector<Vector> latents;
  std::vector<Point2> real;
};

inline GanBatch draw_gan_batch(const GanSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng zr = Rng::derived({seed, 0x2a7e});
  Rng pr = Rng::derived({seed, 0x9e41});
  GanBatch b;
  b.latents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector z(spec.latent_dim());
    for (double& zi : z) zi = zr.normal();
    b.latents.push_back(std::move(z));
  }
  b.real = sample_target(spec.target, n, pr);
  return b;
}

/// The GAN as a two-player game over x = (generator params, critic params),
/// with utilities estimated on one fixed mini-batch drawn from `seed`.
inline TwoPlayerGame gan_game(const GanSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto batch = std::make_shared<const GanBatch>(draw_gan_batch(spec, spec.batch, seed));
  const std::size_t n1 = spec.generator_params();
  const double inv_b = 1.0 / static_cast<double>(spec.batch);

  struct Logits {
    std::vector<ad::Var> fake;
    std::vector<ad::Var> real;
  };
  auto logits = [spec, batch, n1](std::span<const ad::Var> x) {
    const auto gen = x.first(n1);
    const auto disc = x.subspan(n1);
    Logits out;
    for (const Vector& z : batch->latents) {
      const std::vector<ad::Var> sample = mlp_forward(gen, spec.generator, z);
      out.fake.push_back(mlp_forward(disc, spec.discriminator, std::span<const ad::Var>(sample))[0]);
    }
    for (const Point2& p : batch->real) out.real.push_back(mlp_forward(disc, spec.discriminator, p)[0]);
    return out;
  };
  auto mean_of = [inv_b](std::vector<ad::Var> terms) { return ad::sum(terms) * inv_b; };
  auto critic_js = [mean_of](const Logits& l) {
    std::vector<ad::Var> terms;
    for (const ad::Var& t : l.real) terms.push_back(ad::log_sigmoid(t));
    for (const ad::Var& t : l.fake) terms.push_back(ad::log_sigmoid(-t));
    return mean_of(std::move(terms));
  };

  switch (spec.objective) {
    case Objective::minimax_js:
      return TwoPlayerGame::zero_sum(spec.dim(), n1, [logits, critic_js](ad::Tape&, std::span<const ad::Var> x) {
        return -critic_js(logits(x));
      });
    case Objective::indicator:
      return TwoPlayerGame::zero_sum(spec.dim(), n1, [logits, mean_of](ad::Tape&, std::span<const ad::Var> x) {
        const Logits l = logits(x);
        // generator utility f = E_p[t] - E_q[t]
        std::vector<ad::Var> terms = l.real;
        for (const ad::Var& t : l.fake) terms.push_back(-t);
        return mean_of(std::move(terms));
      });
    case Objective::non_saturating:
      return TwoPlayerGame::general(
          spec.dim(), n1, [logits, critic_js, mean_of](ad::Tape&, std::span<const ad::Var> x) {
            const Logits l = logits(x);
            std::vector<ad::Var> gen_terms;
            for (const ad::Var& t : l.fake) gen_terms.push_back(ad::log_sigmoid(t));
            return UtilityPair{mean_of(std::move(gen_terms)), critic_js(l)};
          });
  }
  throw std::logic_error("gan_game: unhandled objective");
}

/// n generator samples; depends only on the generator parameters and seed.
inline std::vector<Point2> generator_samples(const GanSpec& spec, std::span<const double> generator_params,
                                             std::size_t n, std::uint64_t seed) {
  if (generator_params.size() != spec.generator_params())
    throw std::invalid_argument("generator_samples: parameter count mismatch");
  Rng rng = Rng::derived({seed, 0x5a3f});
  std::vector<Point2> out;
  out.reserve(n);
  Vector z(spec.latent_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (double& zi : z) zi = rng.normal();
    const Vector y = mlp_forward_values(generator_params, spec.generator, z);
    out.push_back({y[0], y[1]});
  }
  return out;
}

/// Coverage radius multiplier·σ·√(2 ln n): the distance below which an
/// exact target sample falls except with probability about 1/n^(multiplier²).
inline double coverage_radius(const MoGTarget& target, std::size_t n, double radius_multiplier) {
  return radius_multiplier * target.sigma * std::sqrt(2.0 * std::log(static_cast<double>(std::max<std::size_t>(n, 1))));
}

/// Number of modes with at least one sample inside the coverage radius.
inline std::size_t mode_coverage(std::span<const Point2> samples, const MoGTarget& target, double radius_multiplier) {
  if (!(radius_multiplier > 0.0)) throw std::invalid_argument("mode_coverage: radius multiplier must be positive");
  const double r = coverage_radius(target, samples.size(), radius_multiplier);
  std::size_t covered = 0;
  for (std::size_t k = 0; k < target.modes; ++k) {
    const Point2 c = target.mode(k);
    for (const Point2& p : samples) {
      if (std::hypot(p[0] - c[0], p[1] - c[1]) <= r) {
        ++covered;
        break;
      }
    }
  }
  return covered;
}

// ---------------------------------------------------------------------------
// Parameter snapshots: JSON manifest plus raw little-endian float64 array.

struct SnapshotBlock {
  std::string name;
  std::string kind;  // "mlp" (dims are layer widths) or "vector" (dims = {length})
  std::vector<std::size_t> dims;

  std::size_t param_count() const {
    if (kind == "mlp") return MlpShape{dims}.param_count();
    if (kind == "vector" && dims.size() == 1) return dims[0];
    throw std::invalid_argument("snapshot: unknown block kind '" + kind + "'");
  }
  friend bool operator==(const SnapshotBlock&, const SnapshotBlock&) = default;
};

struct Snapshot {
  Vector values;
  std::size_t split = 0;
  std::vector<SnapshotBlock> blocks;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

inline Snapshot gan_snapshot(const GanSpec& spec, const GameState& s) {
  return Snapshot{s.x, s.split,
                  {{"generator", "mlp", spec.generator.dims}, {"discriminator", "mlp", spec.discriminator.dims}}};
}

inline Snapshot vector_snapshot(const GameState& s) {
  return Snapshot{s.x, s.split, {{"phi", "vector", {s.split}}, {"theta", "vector", {s.dim() - s.split}}}};
}

inline std::string snapshot_manifest(const Snapshot& snap, const std::string& data_file) {
  nlohmann::ordered_json j;
  j["format"] = "float64-le";
  j["data"] = data_file;
  j["count"] = snap.values.size();
  j["split"] = snap.split;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const SnapshotBlock& b : snap.blocks) j["blocks"].push_back({{"name", b.name}, {"kind", b.kind}, {"dims", b.dims}});
  return j.dump(2) + "\n";
}

/// Writes <stem>.json and <stem>.bin.
inline void write_snapshot(const std::string& stem, const Snapshot& snap) {
  const std::string bin_path = stem + ".bin";
  const std::string bin_name = bin_path.substr(bin_path.find_last_of('/') + 1);
  std::ofstream manifest(stem + ".json", std::ios::binary);
  manifest << snapshot_manifest(snap, bin_name);
  std::ofstream bin(bin_path, std::ios::binary);
  for (double v : snap.values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
    bin.write(bytes, 8);
  }
  if (!manifest || !bin) throw std::runtime_error("write_snapshot: cannot write " + stem);
}

/// Reads a snapshot from its manifest path (<stem>.json).
inline Snapshot read_snapshot(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("read_snapshot: cannot open " + manifest_path);
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("format").get<std::string>() != "float64-le")
    throw std::invalid_argument("read_snapshot: unsupported format");
  Snapshot snap;
  snap.split = j.at("split").get<std::size_t>();
  for (const auto& b : j.at("blocks"))
    snap.blocks.push_back({b.at("name").get<std::string>(), b.at("kind").get<std::string>(),
                           b.at("dims").get<std::vector<std::size_t>>()});
  const std::size_t count = j.at("count").get<std::size_t>();
  std::size_t expected = 0;
  for (const SnapshotBlock& b : snap.blocks) expected += b.param_count();
  if (expected != count) throw std::invalid_argument("read_snapshot: block shapes do not add up to count");

  const auto slash = manifest_path.find_last_of('/');
  const std::string dir = slash == std::string::npos ? std::string() : manifest_path.substr(0, slash + 1);
  std::ifstream bin(dir + j.at("data").get<std::string>(), std::ios::binary);
  if (!bin) throw std::runtime_error("read_snapshot: cannot open data file");
  snap.values.resize(count);
  for (double& v : snap.values) {
    unsigned char bytes[8];
    if (!bin.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("read_snapshot: truncated data file");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    v = std::bit_cast<double>(bits);
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw std::runtime_error("read_snapshot: trailing data in data file");
  return snap;
}

}  // namespace nashkit
