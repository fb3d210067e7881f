#pragma once

// Run configuration: a flat key=value text format with '#' comments, plus
// presets and command-line overrides layered on top.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nashkit/csv.hpp"
#include "nashkit/densela.hpp"
#include "nashkit/games.hpp"
#include "nashkit/optimizers.hpp"

namespace nashkit {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  // game
  std::string game = "bilinear";  // bilinear | quadratic | mog
  Matrix coupling{{1.0}};
  double a = 1.0;
  double b = 1.0;
  Vector x0;  // empty: drawn from the seed (analytic games) or the network init (mog)
  std::string preset;
  Objective objective = Objective::non_saturating;
  std::size_t modes = 8;
  double sigma = 1e-2;
  std::size_t batch = default_batch;
  std::vector<std::size_t> generator_dims{16, 16, 16, 16, 16, 2};
  std::vector<std::size_t> discriminator_dims{2, 16, 16, 16, 16, 1};

  // optimizer
  Rule rule = Rule::simga;
  HyperParams params;
  bool warm_start_beta = true;

  // run control and outputs
  std::size_t steps = 100;
  std::uint64_t seed = 0;
  std::size_t record_every = 1;
  std::string out_dir = "out";
  std::vector<std::size_t> spectrum_points;
  std::optional<double> spectrum_clip;
  std::size_t eval_batch = 1024;
  std::size_t coverage_samples = 1000;
  double coverage_radius = 1.0;
  bool timing = false;

  // spectrum subcommand
  std::string snapshot;  // empty: the initial state
  std::optional<double> spectrum_gamma;  // default: params.gamma

  bool is_mog() const { return game == "mog"; }

  GanSpec gan_spec() const {
    GanSpec s;
    s.generator = MlpShape{generator_dims};
    s.discriminator = MlpShape{discriminator_dims};
    s.objective = objective;
    s.target = MoGTarget{modes, sigma};
    s.batch = batch;
    return s;
  }

  void validate() const {
    if (game != "bilinear" && game != "quadratic" && game != "mog") throw ConfigError("unknown game: " + game);
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (record_every < 1) throw ConfigError("record_every must be at least 1");
    if (eval_batch < 1 || coverage_samples < 1) throw ConfigError("eval_batch and coverage_samples must be positive");
    if (!(coverage_radius > 0.0)) throw ConfigError("coverage_radius must be positive");
    if (coupling.rows() == 0 || coupling.cols() == 0) throw ConfigError("coupling must be non-empty");
    if (!is_mog() && !x0.empty() && x0.size() != coupling.rows() + coupling.cols())
      throw ConfigError("x0 length does not match the coupling shape");
    if (is_mog()) {
      try {
        gan_spec().validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      if (!x0.empty() && x0.size() != gan_spec().dim()) throw ConfigError("x0 length does not match the networks");
    }
    try {
      params.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (spectrum_gamma && !(*spectrum_gamma >= 0.0)) throw ConfigError("spectrum_gamma must be non-negative");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline bool operator==(const HyperParams& l, const HyperParams& r) {
  return l.h == r.h && l.gamma == r.gamma && l.alpha == r.alpha && l.epsilon == r.epsilon &&
         l.momentum_gamma == r.momentum_gamma;
}

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    return csv::parse_real(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not a number: " + v);
  }
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("key '" + key + "': not a non-negative integer: " + v);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': integer out of range: " + v);
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false: " + v);
}

inline std::vector<std::string> split_list(const std::string& v, char sep) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (const std::string& cell : csv::split(v, sep)) out.push_back(trim(cell));
  return out;
}

inline Vector to_reals(const std::string& key, const std::string& v) {
  Vector out;
  for (const std::string& c : split_list(v, ',')) out.push_back(to_real(key, c));
  return out;
}

inline std::vector<std::size_t> to_counts(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& c : split_list(v, ',')) out.push_back(static_cast<std::size_t>(to_count(key, c)));
  return out;
}

/// Rows separated by ';', entries by ','.
inline Matrix to_matrix(const std::string& key, const std::string& v) {
  const std::vector<std::string> rows = split_list(v, ';');
  if (rows.empty()) throw ConfigError("key '" + key + "': empty matrix");
  std::vector<Vector> parsed;
  for (const std::string& r : rows) parsed.push_back(to_reals(key, r));
  Matrix m(parsed.size(), parsed[0].size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i].size() != m.cols()) throw ConfigError("key '" + key + "': ragged matrix rows");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = parsed[i][j];
  }
  return m;
}

inline std::string join_reals(std::span<const double> xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + csv::real(xs[i]);
  return s;
}

inline std::string join_counts(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

inline std::string matrix_text(const Matrix& m) {
  std::string s;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) s += ';';
    for (std::size_t j = 0; j < m.cols(); ++j) s += (j ? "," : "") + csv::real(m(i, j));
  }
  return s;
}

}  // namespace config_detail

using ConfigPairs = std::vector<std::pair<std::string, std::string>>;

/// key = value lines; blank lines and text after '#' are ignored.
inline ConfigPairs parse_config_pairs(std::istream& in) {
  ConfigPairs out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = config_detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, config_detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void apply_config_value(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace config_detail;
  if (key == "game") c.game = v;
  else if (key == "coupling") c.coupling = to_matrix(key, v);
  else if (key == "a") c.a = to_real(key, v);
  else if (key == "b") c.b = to_real(key, v);
  else if (key == "x0") c.x0 = to_reals(key, v);
  else if (key == "preset") {
    if (!v.empty()) preset_from_string(v);
    c.preset = v;
  } else if (key == "objective") {
    try {
      c.objective = objective_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "modes") c.modes = to_count(key, v);
  else if (key == "sigma") c.sigma = to_real(key, v);
  else if (key == "batch") c.batch = to_count(key, v);
  else if (key == "generator_dims") c.generator_dims = to_counts(key, v);
  else if (key == "discriminator_dims") c.discriminator_dims = to_counts(key, v);
  else if (key == "optimizer") {
    try {
      c.rule = rule_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (key == "h") c.params.h = to_real(key, v);
  else if (key == "gamma") c.params.gamma = to_real(key, v);
  else if (key == "alpha") c.params.alpha = to_real(key, v);
  else if (key == "epsilon") c.params.epsilon = to_real(key, v);
  else if (key == "momentum_gamma") c.params.momentum_gamma = to_real(key, v);
  else if (key == "warm_start_beta") c.warm_start_beta = to_bool(key, v);
  else if (key == "steps") c.steps = to_count(key, v);
  else if (key == "seed") c.seed = to_count(key, v);
  else if (key == "record_every") c.record_every = to_count(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "spectrum_points") c.spectrum_points = to_counts(key, v);
  else if (key == "spectrum_clip") c.spectrum_clip = v.empty() ? std::nullopt : std::optional(to_real(key, v));
  else if (key == "eval_batch") c.eval_batch = to_count(key, v);
  else if (key == "coverage_samples") c.coverage_samples = to_count(key, v);
  else if (key == "coverage_radius") c.coverage_radius = to_real(key, v);
  else if (key == "timing") c.timing = to_bool(key, v);
  else if (key == "snapshot") c.snapshot = v;
  else if (key == "spectrum_gamma") c.spectrum_gamma = v.empty() ? std::nullopt : std::optional(to_real(key, v));
  else throw ConfigError("unknown config key: " + key);
}

/// Key/value defaults a preset stands for. "paper" is the full mixture-of-
/// Gaussians setting; "small" is a scaled-down version that trains in seconds.
inline ConfigPairs preset_pairs(Preset p) {
  if (p == Preset::paper)
    return {{"game", "mog"},
            {"generator_dims", "16,16,16,16,16,2"},
            {"discriminator_dims", "2,16,16,16,16,1"},
            {"modes", "8"},
            {"sigma", "0.01"},
            {"batch", "64"},
            {"optimizer", "rescaled_consensus"},
            {"h", "0.0001"},
            {"gamma", "10"},
            {"alpha", "0.1"},
            {"epsilon", "1e-08"},
            {"steps", "20000"},
            {"record_every", "100"},
            {"eval_batch", "1024"},
            {"coverage_samples", "1000"},
            {"coverage_radius", "1"}};
  return {{"game", "mog"},
          {"generator_dims", "4,8,8,2"},
          {"discriminator_dims", "2,8,8,1"},
          {"modes", "4"},
          {"sigma", "0.01"},
          {"batch", "64"},
          {"optimizer", "rescaled_consensus"},
          {"h", "0.07"},
          {"gamma", "2"},
          {"alpha", "0.1"},
          {"epsilon", "0.01"},
          {"steps", "3000"},
          {"record_every", "100"},
          {"eval_batch", "4096"},
          {"coverage_samples", "1000"},
          {"coverage_radius", "1"}};
}

/// defaults <- preset <- file pairs <- overrides. The preset comes from the
/// overrides if given there, else from the file.
inline RunConfig build_config(const ConfigPairs& file, const ConfigPairs& overrides) {
  std::string preset;
  for (const auto& [k, v] : file)
    if (k == "preset") preset = v;
  for (const auto& [k, v] : overrides)
    if (k == "preset") preset = v;
  RunConfig c;
  if (!preset.empty()) {
    Preset p;
    try {
      p = preset_from_string(preset);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    for (const auto& [k, v] : preset_pairs(p)) apply_config_value(c, k, v);
  }
  for (const auto& [k, v] : file) apply_config_value(c, k, v);
  for (const auto& [k, v] : overrides) apply_config_value(c, k, v);
  c.validate();
  return c;
}

inline RunConfig parse_config(std::istream& in, const ConfigPairs& overrides = {}) {
  return build_config(parse_config_pairs(in), overrides);
}

inline RunConfig parse_config_text(const std::string& text, const ConfigPairs& overrides = {}) {
  std::istringstream in(text);
  return parse_config(in, overrides);
}

inline RunConfig load_config(const std::string& path, const ConfigPairs& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  return parse_config(in, overrides);
}

/// Every key, one per line, in a fixed order; parse_config_text inverts it.
inline std::string serialize_config(const RunConfig& c) {
  using namespace config_detail;
  std::ostringstream o;
  o << "game = " << c.game << '\n';
  o << "coupling = " << matrix_text(c.coupling) << '\n';
  o << "a = " << csv::real(c.a) << '\n';
  o << "b = " << csv::real(c.b) << '\n';
  o << "x0 = " << join_reals(c.x0) << '\n';
  o << "preset = " << c.preset << '\n';
  o << "objective = " << to_string(c.objective) << '\n';
  o << "modes = " << c.modes << '\n';
  o << "sigma = " << csv::real(c.sigma) << '\n';
  o << "batch = " << c.batch << '\n';
  o << "generator_dims = " << join_counts(c.generator_dims) << '\n';
  o << "discriminator_dims = " << join_counts(c.discriminator_dims) << '\n';
  o << "optimizer = " << to_string(c.rule) << '\n';
  o << "h = " << csv::real(c.params.h) << '\n';
  o << "gamma = " << csv::real(c.params.gamma) << '\n';
  o << "alpha = " << csv::real(c.params.alpha) << '\n';
  o << "epsilon = " << csv::real(c.params.epsilon) << '\n';
  o << "momentum_gamma = " << csv::real(c.params.momentum_gamma) << '\n';
  o << "warm_start_beta = " << (c.warm_start_beta ? "true" : "false") << '\n';
  o << "steps = " << c.steps << '\n';
  o << "seed = " << c.seed << '\n';
  o << "record_every = " << c.record_every << '\n';
  o << "out_dir = " << c.out_dir << '\n';
  o << "spectrum_points = " << join_counts(c.spectrum_points) << '\n';
  o << "spectrum_clip = " << (c.spectrum_clip ? csv::real(*c.spectrum_clip) : "") << '\n';
  o << "eval_batch = " << c.eval_batch << '\n';
  o << "coverage_samples = " << c.coverage_samples << '\n';
  o << "coverage_radius = " << csv::real(c.coverage_radius) << '\n';
  o << "timing = " << (c.timing ? "true" : "false") << '\n';
  o << "snapshot = " << c.snapshot << '\n';
  o << "spectrum_gamma = " << (c.spectrum_gamma ? csv::real(*c.spectrum_gamma) : "") << '\n';
  return o.str();
}

}  // namespace nashkit
