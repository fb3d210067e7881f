#pragma once

// Run, spectrum and sweep pipelines driven by a RunConfig, writing CSV, JSON
// and snapshot files into an output directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nashkit/analysis.hpp"
#include "nashkit/config.hpp"
#include "nashkit/csv.hpp"
#include "nashkit/game.hpp"
#include "nashkit/games.hpp"
#include "nashkit/optimizers.hpp"
#include "nashkit/random.hpp"

namespace nashkit {

inline constexpr double blow_up_norm = 1e12;
inline constexpr double status_rate_band = 1e-6;

enum class RunStatus { converged, marginal, diverged };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::marginal: return "marginal";
    case RunStatus::diverged: return "diverged";
  }
  return "?";
}

/// Game instances for one configuration: a fixed game for closed-form
/// problems, a fresh minibatch game per step for the mixture of Gaussians.
class Problem {
public:
  explicit Problem(const RunConfig& c) : config_(c) {
    c.validate();
    if (c.game == "bilinear") fixed_ = BilinearGame{c.coupling}.game();
    else if (c.game == "quadratic") fixed_ = QuadraticGame{c.a, c.b, c.coupling}.game();
    else {
      spec_ = c.gan_spec();
      GanSpec eval = *spec_;
      eval.batch = c.eval_batch;
      eval_ = gan_game(eval, Rng::derived({c.seed, 0xe7a1}).next_u64());
      analysis_ = gan_game(*spec_, Rng::derived({c.seed, 0xa11a}).next_u64());
    }
  }

  bool is_mog() const { return spec_.has_value(); }
  const GanSpec& gan() const { return *spec_; }
  std::size_t dim() const { return is_mog() ? spec_->dim() : fixed_->dim(); }
  std::size_t split() const { return is_mog() ? spec_->generator_params() : fixed_->split(); }

  /// Game used for the update at step k (0-based).
  TwoPlayerGame step_game(std::size_t k) const {
    if (!is_mog()) return *fixed_;
    return gan_game(*spec_, Rng::derived({config_.seed, static_cast<std::uint64_t>(k)}).next_u64());
  }

  /// Game on which field norms and utilities are reported.
  const TwoPlayerGame& eval_game() const { return is_mog() ? *eval_ : *fixed_; }

  /// Game on which Jacobian spectra are computed.
  const TwoPlayerGame& analysis_game() const { return is_mog() ? *analysis_ : *fixed_; }

  GameState initial_state() const {
    if (!config_.x0.empty()) return GameState(config_.x0, split());
    if (is_mog()) return gan_initial_state(*spec_, config_.seed);
    Rng rng = Rng::derived({config_.seed, 0x1417});
    Vector x(dim());
    for (double& xi : x) xi = rng.normal();
    return GameState(std::move(x), split());
  }

  std::optional<std::size_t> coverage(const GameState& s) const {
    if (!is_mog()) return std::nullopt;
    const auto samples = generator_samples(*spec_, s.phi(), config_.coverage_samples,
                                           Rng::derived({config_.seed, 0xc0fe}).next_u64());
    return mode_coverage(samples, spec_->target, config_.coverage_radius);
  }

  Snapshot snapshot(const GameState& s) const { return is_mog() ? gan_snapshot(*spec_, s) : vector_snapshot(s); }

private:
  RunConfig config_;
  std::optional<TwoPlayerGame> fixed_;
  std::optional<GanSpec> spec_;
  std::optional<TwoPlayerGame> eval_;
  std::optional<TwoPlayerGame> analysis_;
};

struct TrajectoryRecord {
  std::size_t step = 0;
  double field_norm = 0.0;
  double player1_utility = 0.0;
  double player2_utility = 0.0;
  std::optional<std::size_t> mode_coverage;
  double wall_ms = 0.0;
};

inline constexpr const char* trajectory_csv_header = "step,field_norm,player1_utility,player2_utility,mode_coverage,wall_ms";

inline void write_trajectory_row(std::ostream& out, const TrajectoryRecord& r) {
  out << r.step << ',' << csv::real(r.field_norm) << ',' << csv::real(r.player1_utility) << ','
      << csv::real(r.player2_utility) << ',' << (r.mode_coverage ? std::to_string(*r.mode_coverage) : "") << ','
      << csv::real(r.wall_ms) << '\n';
}

inline std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != trajectory_csv_header)
    throw std::invalid_argument("trajectory csv: missing or wrong header");
  std::vector<TrajectoryRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != 6) throw std::invalid_argument("trajectory csv: malformed row: " + line);
    TrajectoryRecord r;
    r.step = static_cast<std::size_t>(std::stoull(cells[0]));
    r.field_norm = csv::parse_real(cells[1]);
    r.player1_utility = csv::parse_real(cells[2]);
    r.player2_utility = csv::parse_real(cells[3]);
    if (!cells[4].empty()) r.mode_coverage = static_cast<std::size_t>(std::stoull(cells[4]));
    r.wall_ms = csv::parse_real(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

/// exp of the least-squares slope of log field_norm against step over the
/// finite, positive records; empty with fewer than two such records.
inline std::optional<double> fitted_field_rate(std::span<const TrajectoryRecord> records) {
  std::vector<double> xs, ys;
  for (const TrajectoryRecord& r : records)
    if (std::isfinite(r.field_norm) && r.field_norm > 0.0) {
      xs.push_back(static_cast<double>(r.step));
      ys.push_back(std::log(r.field_norm));
    }
  if (xs.size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return std::exp(sxy / sxx);
}

/// diverged on blow-up, else by the fitted rate: below 1 - band converged,
/// above 1 + band diverged, otherwise marginal. A zero final field norm counts
/// as converged.
inline RunStatus run_status(bool blew_up, std::optional<double> rate, double final_norm) {
  if (blew_up) return RunStatus::diverged;
  if (final_norm == 0.0) return RunStatus::converged;
  if (!rate) return RunStatus::marginal;
  if (*rate < 1.0 - status_rate_band) return RunStatus::converged;
  if (*rate > 1.0 + status_rate_band) return RunStatus::diverged;
  return RunStatus::marginal;
}

inline bool uses_consensus(Rule r) {
  return r == Rule::consensus || r == Rule::rescaled_consensus || r == Rule::preconditioned;
}

struct RunResult {
  RunStatus status = RunStatus::marginal;
  std::size_t steps_completed = 0;
  bool blew_up = false;
  std::vector<TrajectoryRecord> records;
  std::optional<double> fitted_rate;
  GameState final_state;
  std::optional<std::size_t> final_coverage;

  int exit_code() const { return status == RunStatus::diverged ? 1 : 0; }
};

namespace harness_detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline nlohmann::ordered_json real_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline void write_spectrum_file(const std::filesystem::path& p, const Spectrum& s, std::optional<double> clip) {
  auto out = open_out(p);
  write_spectrum_csv(out, spectrum_histogram_export(s, clip));
}

inline nlohmann::ordered_json quotient_json(const Quotient& q) {
  return q.is_infinite() ? nlohmann::ordered_json("infinite") : nlohmann::ordered_json(q.value());
}

}  // namespace harness_detail

/// Runs the configured optimizer and writes trajectory.csv, spectrum files at
/// the requested steps, params.json/params.bin, summary.json and config.txt.
inline RunResult run_pipeline(const RunConfig& c) {
  using namespace harness_detail;
  using clock = std::chrono::steady_clock;
  const auto dir = prepare_dir(c.out_dir);
  const Problem problem(c);
  {
    auto out = open_out(dir / "config.txt");
    out << serialize_config(c);
  }

  StepRule rule{c.rule, c.params, {}};
  const GameState start = problem.initial_state();
  Vector z = augment(c.rule, start.x);
  const std::size_t n = start.dim();
  if ((c.rule == Rule::rescaled || c.rule == Rule::rescaled_consensus) && c.warm_start_beta) {
    const double g = c.rule == Rule::rescaled ? 0.0 : c.params.gamma;
    const double d = norm2(consensus_field(problem.step_game(0), start.x, g));
    z[n] = d * d;
  }

  auto out = open_out(dir / "trajectory.csv");
  out << trajectory_csv_header << '\n';
  RunResult result;
  GameState last_good = start;
  const auto t0 = clock::now();

  auto spectra = [&](std::size_t step, const GameState& s) {
    if (std::find(c.spectrum_points.begin(), c.spectrum_points.end(), step) == c.spectrum_points.end()) return;
    write_spectrum_file(dir / ("spectrum_" + std::to_string(step) + ".csv"),
                        field_spectrum(problem.analysis_game(), s, 0.0), c.spectrum_clip);
    if (uses_consensus(c.rule) && c.params.gamma > 0.0)
      write_spectrum_file(dir / ("consensus_spectrum_" + std::to_string(step) + ".csv"),
                          field_spectrum(problem.analysis_game(), s, c.params.gamma), c.spectrum_clip);
  };
  // Records the state reached after `step` updates; false once it has blown up.
  auto record = [&](std::size_t step, const GameState& s) {
    TrajectoryRecord r;
    r.step = step;
    const Vector v = problem.eval_game().field(s.x);
    r.field_norm = norm2(v);
    if (!std::isfinite(r.field_norm)) return false;
    const auto [u1, u2] = problem.eval_game().utility_values(s.x);
    r.player1_utility = u1;
    r.player2_utility = u2;
    r.mode_coverage = problem.coverage(s);
    if (c.timing) r.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (!std::isfinite(u1) || !std::isfinite(u2)) return false;
    write_trajectory_row(out, r);
    result.records.push_back(r);
    return r.field_norm <= blow_up_norm;
  };

  bool ok = record(0, start);
  if (ok) spectra(0, start);
  for (std::size_t k = 0; ok && k < c.steps; ++k) {
    const TwoPlayerGame game = problem.step_game(k);
    if (c.rule == Rule::preconditioned) rule.precond = consensus_preconditioner(game, c.params.gamma);
    try {
      z = apply_rule(rule, game, z);
    } catch (const std::domain_error&) {
      ok = false;
      break;
    }
    if (!all_finite(z)) {
      ok = false;
      break;
    }
    const GameState s(Vector(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n)), start.split);
    result.steps_completed = k + 1;
    last_good = s;
    const std::size_t step = k + 1;
    if (step % c.record_every == 0 || step == c.steps) {
      ok = record(step, s);
      if (ok) spectra(step, s);
    } else if (std::find(c.spectrum_points.begin(), c.spectrum_points.end(), step) != c.spectrum_points.end()) {
      spectra(step, s);
    }
  }
  out.close();

  result.blew_up = !ok;
  result.final_state = last_good;
  result.fitted_rate = fitted_field_rate(result.records);
  const double final_norm = result.records.empty() ? 0.0 : result.records.back().field_norm;
  result.status = run_status(result.blew_up, result.fitted_rate, final_norm);
  result.final_coverage = result.records.empty() ? std::nullopt : result.records.back().mode_coverage;

  write_snapshot((dir / "params").string(), problem.snapshot(last_good));

  nlohmann::ordered_json j;
  j["status"] = to_string(result.status);
  j["steps_requested"] = c.steps;
  j["steps_completed"] = result.steps_completed;
  j["blew_up"] = result.blew_up;
  j["initial_field_norm"] = result.records.empty() ? nlohmann::ordered_json(nullptr)
                                                   : real_or_null(result.records.front().field_norm);
  j["final_field_norm"] = result.blew_up || result.records.empty() ? nlohmann::ordered_json("diverged")
                                                                    : real_or_null(final_norm);
  j["fitted_rate"] = result.fitted_rate ? real_or_null(*result.fitted_rate) : nlohmann::ordered_json(nullptr);
  if (!result.records.empty()) {
    j["player1_utility"] = real_or_null(result.records.back().player1_utility);
    j["player2_utility"] = real_or_null(result.records.back().player2_utility);
  }
  j["mode_coverage"] = result.final_coverage ? nlohmann::ordered_json(*result.final_coverage)
                                             : nlohmann::ordered_json(nullptr);
  j["seed"] = c.seed;
  auto summary = open_out(dir / "summary.json");
  summary << j.dump(2) << '\n';
  return result;
}

struct SpectrumResult {
  Spectrum spectrum;
  double gamma = 0.0;
};

/// Spectrum of v′ (γ = 0) or w′ at a snapshot or at the initial state;
/// writes spectrum.csv and spectrum_summary.json.
inline SpectrumResult spectrum_pipeline(const RunConfig& c) {
  using namespace harness_detail;
  const auto dir = prepare_dir(c.out_dir);
  const Problem problem(c);
  GameState s = problem.initial_state();
  if (!c.snapshot.empty()) {
    const Snapshot snap = read_snapshot(c.snapshot);
    if (snap.values.size() != problem.dim() || snap.split != problem.split())
      throw ConfigError("snapshot shape does not match the configured game");
    s = GameState(snap.values, snap.split);
  }
  SpectrumResult r;
  r.gamma = c.spectrum_gamma.value_or(c.params.gamma);
  r.spectrum = field_spectrum(problem.analysis_game(), s, r.gamma);
  write_spectrum_file(dir / "spectrum.csv", r.spectrum, c.spectrum_clip);
  nlohmann::ordered_json j;
  j["gamma"] = r.gamma;
  j["count"] = r.spectrum.eigenvalues.size();
  j["max_real"] = r.spectrum.max_real;
  j["spectral_radius"] = r.spectrum.spectral_radius;
  j["q"] = quotient_json(r.spectrum.quotient_q);
  auto out = open_out(dir / "spectrum_summary.json");
  out << j.dump(2) << '\n';
  return r;
}

struct SweepRow {
  std::string value;
  double final_field_norm = 0.0;
  RunStatus status = RunStatus::marginal;
  std::optional<double> fitted_rate;
  Quotient q;
};

inline constexpr const char* sweep_csv_header = "value,final_field_norm,status,fitted_rate,q";

/// One run per value of `axis`, run i in <out_dir>/run_<i> with seed
/// base + i. The q column is the quotient of the run's field spectrum (w′ for
/// its γ, v′ when γ = 0) at the base configuration's initial state, so q is
/// comparable across the sweep.
inline std::vector<SweepRow> sweep_pipeline(const RunConfig& base, const std::string& axis,
                                            const std::vector<std::string>& values) {
  using namespace harness_detail;
  if (values.empty()) throw ConfigError("sweep: no values given");
  const auto dir = prepare_dir(base.out_dir);
  const Problem reference(base);
  const GameState x_ref = reference.initial_state();
  std::vector<SweepRow> rows;
  auto out = open_out(dir / "sweep.csv");
  out << sweep_csv_header << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig c = base;
    apply_config_value(c, axis, values[i]);
    c.seed = base.seed + i;
    c.out_dir = (dir / ("run_" + std::to_string(i))).string();
    c.validate();
    const RunResult res = run_pipeline(c);
    SweepRow row;
    row.value = values[i];
    row.status = res.status;
    row.final_field_norm = res.blew_up || res.records.empty() ? std::numeric_limits<double>::infinity()
                                                              : res.records.back().field_norm;
    row.fitted_rate = res.fitted_rate;
    const double g = uses_consensus(c.rule) ? c.params.gamma : 0.0;
    row.q = field_spectrum(reference.analysis_game(), x_ref, g).quotient_q;
    out << row.value << ',' << (std::isfinite(row.final_field_norm) ? csv::real(row.final_field_norm) : "diverged")
        << ',' << to_string(row.status) << ','
        << (row.fitted_rate && std::isfinite(*row.fitted_rate) ? csv::real(*row.fitted_rate) : "") << ','
        << (row.q.is_infinite() ? std::string("infinite") : csv::real(row.q.value())) << '\n';
    rows.push_back(row);
  }
  return rows;
}

}  // namespace nashkit
