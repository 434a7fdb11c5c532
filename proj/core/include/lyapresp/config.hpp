#pragma once

#include "lyapresp/experiments.hpp"
#include "lyapresp/lorenz96.hpp"
#include "lyapresp/lyapunov.hpp"
#include "lyapresp/response.hpp"
#include "lyapresp/rk4.hpp"
#include "lyapresp/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lyapresp {

/// Built-in scale presets. `paper` mirrors the production study
/// (T = 1e6, K = 4e6); `desk` is the documented reduced scale for interactive
/// runs and the acceptance tests (T = 5e4, K = 2e5).
enum class Profile { paper, desk };

Profile profile_from_string(const std::string& name);
std::string to_string(Profile profile);

/// Flat key/value run configuration with sections. Unknown keys, malformed
/// values and inconsistent combinations are rejected with the offending
/// `section.key` before any computation starts.
struct RunConfig {
  // [regime]
  std::optional<double> forcing;       // required for model-driven commands
  int n = 20;
  std::optional<double> alpha;         // both set -> calibration is skipped
  std::optional<double> beta;
  std::string system = "l96";          // "l96" | "linear" (null-response test mode)

  // [integrator]
  double dt = 0.01;
  double spinup = 1000.0;

  // [calibration]
  double calibration_sample_window = 1e5;
  double calibration_validation_window = 2.5e5;
  int calibration_shards = 4;

  // [lyapunov]
  double lyapunov_window = 1e6;
  int renorm_every = 25;
  double block_time = 1000.0;
  std::int64_t trace_stride = 1000;
  double tangent_align = 50.0;
  int trajectories = 1;

  // [response]
  double h = 0.25;
  int depth = 60;
  std::int64_t response_samples = 4000000;
  std::int64_t chunk_samples = 25000;
  std::string endpoint = "printed";    // "printed" | "continuum"
  std::string t0_method = "auto";      // "auto" | "manual"
  std::optional<double> t0;
  double plateau_tol = 0.1;
  int plateau_min_points = 5;
  double plateau_t_min = 1.0;

  // [sweep]
  int node = 0;
  std::vector<double> magnitudes = {-0.03, -0.02, -0.01, 0.0, 0.01, 0.02, 0.03};
  std::optional<double> sweep_window;       // defaults to lyapunov.window
  std::optional<int> sweep_trajectories;    // defaults to lyapunov.trajectories
  std::optional<double> fit_max_p;          // defaults by forcing regime
  std::optional<double> r_t0;               // predicted slope, if known
  std::string response_dir;                 // or read it from a response run

  // [autocorr]
  double lag_max = 15.0;
  double acf_window = 1e5;

  // [run]
  std::uint64_t seed = 1;
  std::string out = ".";
  Profile profile = Profile::paper;
  int shards = 1;                      // worker threads; never changes results
  bool allow_partial = false;

  /// Profile defaults (before any file/flag overrides).
  static RunConfig with_profile(Profile profile);

  /// Parses the file (if given) on top of profile defaults. The profile is
  /// taken from `profile_flag` when set, else from the file's [run] profile
  /// key, else `paper`. Throws ConfigError on unknown keys or bad values.
  static RunConfig load(const std::optional<std::string>& config_path,
                        const std::optional<std::string>& profile_flag);

  /// Cross-field consistency checks; throws ConfigError naming the field.
  void validate() const;

  /// h / dt, validated to be a whole number of steps.
  int substeps() const;

  IntegratorConfig integrator() const;
  CalibrationOptions calibration_options() const;
  LyapunovSettings lyapunov_settings() const;
  ResponseRunOptions response_options() const;
  PlateauOptions plateau_options() const;
  SweepOptions sweep_options() const;
  EndpointMode endpoint_mode() const;

  double resolved_fit_max_p() const;

  /// Every resolved key as "section.key" -> value, for the run manifest.
  std::vector<std::pair<std::string, std::string>> snapshot() const;
};

/// Parses config text (INI-style: [section], key = value, # or ; comments).
/// Exposed for tests; `RunConfig::load` is the main entry point.
void apply_config_text(RunConfig& config, const std::string& text);

}  // namespace lyapresp
