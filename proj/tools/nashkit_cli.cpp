// nashkit-cli: run, spectrum, sweep and config subcommands.
//
// Exit codes: 0 success, 1 the run diverged, 2 configuration or usage error.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nashkit/config.hpp"
#include "nashkit/harness.hpp"

namespace {

using nashkit::ConfigError;
using nashkit::ConfigPairs;

constexpr int exit_ok = 0;
constexpr int exit_diverged = 1;
constexpr int exit_config = 2;

/// Turns leftover "--key value" / "--key=value" tokens into config pairs;
/// dashes inside the key map to underscores. A bare token is the config file.
ConfigPairs extra_pairs(const std::vector<std::string>& extras, std::string& config_path) {
  ConfigPairs out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) {
      if (!config_path.empty()) throw ConfigError("unexpected argument: " + tok);
      config_path = tok;
      continue;
    }
    if (tok.size() < 3) throw ConfigError("unexpected argument: " + tok);
    std::string key = tok.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    for (char& ch : key)
      if (ch == '-') ch = '_';
    out.emplace_back(key, value);
  }
  return out;
}

struct CommonArgs {
  std::string seed;
  std::string out_dir;
  std::string preset;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--out-dir", out_dir, "Output directory");
    app->add_option("--preset", preset, "Preset: paper or small");
    app->allow_extras();
    app->footer("Usage: <subcommand> [CONFIG_FILE] [--key value ...]; any config key is accepted as an override.");
  }

  nashkit::RunConfig build(const CLI::App* app) const {
    ConfigPairs overrides;
    std::string config_path;
    if (!preset.empty()) overrides.emplace_back("preset", preset);
    for (auto& p : extra_pairs(app->remaining(), config_path)) overrides.push_back(std::move(p));
    if (!seed.empty()) overrides.emplace_back("seed", seed);
    if (!out_dir.empty()) overrides.emplace_back("out_dir", out_dir);
    if (config_path.empty()) return nashkit::build_config({}, overrides);
    return nashkit::load_config(config_path, overrides);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based optimization of two-player differentiable games"};
  app.require_subcommand(1);

  CommonArgs run_args, spectrum_args, sweep_args, config_args;
  CLI::App* run = app.add_subcommand("run", "Train and write trajectory, spectra, parameters and summary");
  run_args.add_to(run);
  CLI::App* spectrum = app.add_subcommand("spectrum", "Jacobian spectrum at a snapshot or the initial state");
  spectrum_args.add_to(spectrum);
  CLI::App* sweep = app.add_subcommand("sweep", "One run per value of a hyperparameter");
  sweep_args.add_to(sweep);
  std::string axis, values;
  sweep->add_option("--axis", axis, "Config key to sweep, e.g. h or gamma")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  CLI::App* config = app.add_subcommand("config", "Print the effective configuration");
  config_args.add_to(config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (run->parsed()) {
      const auto result = nashkit::run_pipeline(run_args.build(run));
      std::cout << nashkit::to_string(result.status) << '\n';
      return result.exit_code() == 0 ? exit_ok : exit_diverged;
    }
    if (spectrum->parsed()) {
      const auto result = nashkit::spectrum_pipeline(spectrum_args.build(spectrum));
      std::cout << result.spectrum.eigenvalues.size() << " eigenvalues\n";
      return exit_ok;
    }
    if (sweep->parsed()) {
      std::vector<std::string> vals;
      for (const std::string& v : nashkit::csv::split(values)) vals.push_back(nashkit::config_detail::trim(v));
      const auto rows = nashkit::sweep_pipeline(sweep_args.build(sweep), axis, vals);
      for (const auto& r : rows) std::cout << r.value << ' ' << nashkit::to_string(r.status) << '\n';
      return exit_ok;
    }
    std::cout << nashkit::serialize_config(config_args.build(config));
    return exit_ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_config;
  }
}
