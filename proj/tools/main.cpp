// Command-line front end: calibrate | lyapunov | response | sweep | autocorr | report.
//
// Every run writes its outputs plus a manifest.json (config snapshot, version,
// per-shard seeds, wall clock, output checksums) into --out. Exit codes:
//   0 success, 1 unexpected error, 2 configuration error, 3 calibration error,
//   4 trajectory divergence, 5 no plateau detected.

#include "lyapresp/config.hpp"
#include "lyapresp/experiments.hpp"
#include "lyapresp/io.hpp"
#include "lyapresp/lorenz96.hpp"
#include "lyapresp/lyapunov.hpp"
#include "lyapresp/response.hpp"
#include "lyapresp/rng.hpp"
#include "lyapresp/version.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace lyapresp;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct CliOverrides {
  std::optional<std::string> config_path;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<int> shards;
  std::optional<std::string> out;
  bool allow_partial = false;
};

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "Run configuration file (INI-style)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Base RNG seed (overrides [run] seed)");
  cmd->add_option("--shards", o.shards, "Worker shard count; never changes results");
  cmd->add_option("--out", o.out, "Output directory (overrides [run] out)");
  cmd->add_option("--profile", o.profile, "Scale profile: paper or desk");
  cmd->add_flag("--allow-partial", o.allow_partial,
                "Record diverged sweep rows instead of aborting");
}

RunConfig resolve_config(const CliOverrides& o) {
  RunConfig config = RunConfig::load(o.config_path, o.profile);
  if (o.seed) config.seed = *o.seed;
  if (o.shards) config.shards = *o.shards;
  if (o.out) config.out = *o.out;
  if (o.allow_partial) config.allow_partial = true;
  config.validate();
  return config;
}

/// Stable circulant reference system for the exact-null-response mode:
/// a damped cyclic advection operator with no quadratic term.
Matrix reference_linear_matrix(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = -0.5;
    a(i, (i + 1) % n) = 1.0;
    a((i + 1) % n, i) = -1.0;
  }
  return a;
}

struct ModelBundle {
  std::unique_ptr<System> system;
  std::optional<CalibrationResult> calibration;
  L96Params params{};
};

ModelBundle make_model(const RunConfig& config) {
  ModelBundle bundle;
  if (config.system == "linear") {
    bundle.system = std::make_unique<LinearSystem>(reference_linear_matrix(config.n));
    return bundle;
  }
  if (config.alpha && config.beta) {
    bundle.params = L96Params{config.n, *config.forcing, *config.alpha, *config.beta};
  } else {
    const CalibrationResult cal =
        calibrate(config.n, *config.forcing, config.calibration_options(), config.shards);
    bundle.calibration = cal;
    bundle.params = cal.rescaled_params(config.n, *config.forcing);
  }
  bundle.system = std::make_unique<Lorenz96System>(bundle.params);
  return bundle;
}

ManifestBuilder start_manifest(const std::string& command, const RunConfig& config,
                               const ModelBundle* bundle) {
  ManifestBuilder manifest(command, config.seed);
  manifest.set_config(config.snapshot());
  if (bundle && bundle->calibration)
    manifest.set_calibration(*config.forcing, config.n, *bundle->calibration);
  return manifest;
}

std::vector<std::uint64_t> trajectory_seeds(const EnsembleOptions& ensemble) {
  if (ensemble.trajectories == 1) return {ensemble.seed};
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(ensemble.trajectories));
  for (int t = 0; t < ensemble.trajectories; ++t)
    seeds.push_back(mix_seed(ensemble.seed, static_cast<std::uint64_t>(t)));
  return seeds;
}

void cmd_calibrate(const RunConfig& config) {
  if (config.system != "l96")
    throw ConfigError("regime.system", "calibrate requires the l96 system");
  const auto start = Clock::now();
  const CalibrationResult cal =
      calibrate(config.n, *config.forcing, config.calibration_options(), config.shards);

  write_calibration_csv(join_path(config.out, "calibration.csv"), *config.forcing, config.n, cal);

  ManifestBuilder manifest("calibrate", config.seed);
  manifest.set_config(config.snapshot());
  manifest.set_calibration(*config.forcing, config.n, cal);
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < cal.shards; ++s)
    seeds.push_back(mix_seed(cal.seed, static_cast<std::uint64_t>(s)));
  manifest.set_shard_seeds(std::move(seeds));
  manifest.add_result("alpha", cal.alpha);
  manifest.add_result("beta", cal.beta);
  manifest.add_result("residual_mean", cal.residual_mean);
  manifest.add_result("residual_var", cal.residual_var);
  manifest.add_output(config.out, "calibration.csv");
  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));

  std::printf("calibrate: F = %s, N = %d -> alpha = %s, beta = %s\n",
              format_g17(*config.forcing).c_str(), config.n, format_g17(cal.alpha).c_str(),
              format_g17(cal.beta).c_str());
  std::printf("calibrate: residual mean %s, residual var %s\n",
              format_g17(cal.residual_mean).c_str(), format_g17(cal.residual_var).c_str());
}

void cmd_lyapunov(const RunConfig& config) {
  const auto start = Clock::now();
  const ModelBundle bundle = make_model(config);
  EnsembleOptions ensemble;
  ensemble.trajectories = config.trajectories;
  ensemble.seed = config.seed;
  ensemble.threads = config.shards;
  auto initial = [&config](std::uint64_t s) { return seeded_initial_state(config.n, s); };
  const LyapunovResult result =
      measure_lyapunov(*bundle.system, initial, config.lyapunov_settings(), ensemble);

  write_lyapunov_csv(join_path(config.out, "lyapunov.csv"), result, ensemble.trajectories,
                     config.seed);
  write_lyapunov_trace_csv(join_path(config.out, "lyapunov_trace.csv"), result);

  ManifestBuilder manifest = start_manifest("lyapunov", config, &bundle);
  manifest.set_shard_seeds(trajectory_seeds(ensemble));
  manifest.add_result("lambda", result.lambda);
  manifest.add_result("stderr", result.stderr_lambda);
  manifest.add_result("window", result.window);
  manifest.add_result("blocks", std::to_string(result.blocks));
  manifest.add_output(config.out, "lyapunov.csv");
  manifest.add_output(config.out, "lyapunov_trace.csv");
  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));

  std::printf("lyapunov: lambda = %s +/- %s (window %s, blocks %lld)\n",
              format_g17(result.lambda).c_str(), format_g17(result.stderr_lambda).c_str(),
              format_g17(result.window).c_str(), static_cast<long long>(result.blocks));
}

void cmd_response(const RunConfig& config) {
  const auto start = Clock::now();
  const ModelBundle bundle = make_model(config);
  const ResponseRunOptions options = config.response_options();
  auto initial = [&config](std::uint64_t s) { return seeded_initial_state(config.n, s); };
  const ResponseRunResult run = run_response(*bundle.system, initial, options);
  const CorrelationGrid averaged = run.grid.finalized();
  const ResponseCurve curve = response_curve(averaged);

  write_c1_csv(join_path(config.out, "c1.csv"), averaged);
  write_c2_csv(join_path(config.out, "c2.csv"), averaged);
  write_response_csv(join_path(config.out, "response.csv"), curve);
  write_response_plot(join_path(config.out, "response_plot.dat"), curve);

  ManifestBuilder manifest = start_manifest("response", config, &bundle);
  std::vector<std::uint64_t> seeds;
  for (const auto& chunk : run.chunks) seeds.push_back(chunk.seed);
  manifest.set_shard_seeds(std::move(seeds));
  manifest.add_result("lambda", run.lambda);
  manifest.add_result("samples", std::to_string(averaged.samples()));
  manifest.add_output(config.out, "c1.csv");
  manifest.add_output(config.out, "c2.csv");
  manifest.add_output(config.out, "response.csv");
  manifest.add_output(config.out, "response_plot.dat");

  ResponseTimeSelection selection;
  try {
    selection = config.t0_method == "manual"
                    ? select_response_time(curve, *config.t0)
                    : select_response_time(curve, config.plateau_options());
  } catch (const NoPlateauError&) {
    manifest.add_result("plateau", "none detected");
    manifest.set_wall_clock(seconds_since(start));
    manifest.write(join_path(config.out, "manifest.json"));
    throw;
  }

  PlateauRecord record;
  record.selection = selection;
  record.lambda = run.lambda;
  record.samples = averaged.samples();
  record.endpoint = config.endpoint;
  write_plateau_json(join_path(config.out, "plateau.json"), record);

  manifest.add_result("t0", selection.t0);
  manifest.add_result("r_at_t0", selection.r_at_t0);
  manifest.add_result("t0_method", selection.method);
  manifest.add_output(config.out, "plateau.json");
  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));

  std::printf("response: %lld samples, lambda = %s\n",
              static_cast<long long>(averaged.samples()), format_g17(run.lambda).c_str());
  std::printf("response: t0 = %s (%s), r(t0) = %s\n", format_g17(selection.t0).c_str(),
              selection.method.c_str(), format_g17(selection.r_at_t0).c_str());
}

/// Predicted slope for the fit: explicit [sweep] r_t0 wins, then the plateau
/// report of a prior response run (response_dir, else the output directory).
double resolve_predicted_slope(const RunConfig& config, std::string& source) {
  if (config.r_t0) {
    source = "config";
    return *config.r_t0;
  }
  std::vector<std::string> candidates;
  if (!config.response_dir.empty())
    candidates.push_back(join_path(config.response_dir, "plateau.json"));
  candidates.push_back(join_path(config.out, "plateau.json"));
  for (const auto& path : candidates) {
    if (std::filesystem::exists(path)) {
      source = path;
      return read_plateau_json(path).selection.r_at_t0;
    }
  }
  source = "none";
  return std::numeric_limits<double>::quiet_NaN();
}

void write_fit_outputs(ManifestBuilder& manifest, const RunConfig& config,
                       const SweepResult& sweep, double r_t0, const std::string& source) {
  FitReport report;
  try {
    report = linear_fit_compare(sweep, r_t0, config.resolved_fit_max_p());
  } catch (const std::invalid_argument& e) {
    manifest.add_result("fit", std::string("skipped: ") + e.what());
    std::printf("fit: skipped (%s)\n", e.what());
    return;
  }
  write_report_csv(join_path(config.out, "report.csv"), report);
  write_report_json(join_path(config.out, "report.json"), report, sweep);
  manifest.add_result("predicted_slope", report.predicted_slope);
  manifest.add_result("predicted_slope_source", source);
  manifest.add_result("linear_slope", report.linear_slope);
  manifest.add_result("relative_slope_error", report.relative_slope_error);
  manifest.add_result("quad_significance", report.quad_significance);
  manifest.add_output(config.out, "report.csv");
  manifest.add_output(config.out, "report.json");
  std::printf("fit: measured slope = %s +/- %s over |p| <= %s\n",
              format_g17(report.linear_slope).c_str(),
              format_g17(report.linear_slope_stderr).c_str(),
              format_g17(report.fit_max_p).c_str());
  std::printf("fit: predicted slope = %s (%s), relative error = %s\n",
              format_g17(report.predicted_slope).c_str(), source.c_str(),
              format_g17(report.relative_slope_error).c_str());
}

void cmd_sweep(const RunConfig& config) {
  const auto start = Clock::now();
  const ModelBundle bundle = make_model(config);
  const SweepOptions options = config.sweep_options();
  auto initial = [&config](std::uint64_t s) { return seeded_initial_state(config.n, s); };
  const SweepResult sweep = response_sweep(*bundle.system, initial, options);

  write_sweep_csv(join_path(config.out, "sweep.csv"), sweep);

  ManifestBuilder manifest = start_manifest("sweep", config, &bundle);
  manifest.set_shard_seeds(trajectory_seeds(options.ensemble));
  manifest.add_result("lambda0", sweep.lambda0);
  manifest.add_result("stderr0", sweep.stderr0);
  manifest.add_output(config.out, "sweep.csv");

  int diverged = 0;
  for (const auto& row : sweep.rows) {
    std::printf("sweep: p = %s -> lambda = %s +/- %s%s\n", format_g17(row.p).c_str(),
                format_g17(row.lambda).c_str(), format_g17(row.stderr_lambda).c_str(),
                row.diverged ? " [diverged]" : "");
    if (row.diverged) ++diverged;
  }
  if (diverged > 0) manifest.add_result("diverged_rows", std::to_string(diverged));

  std::string source;
  const double r_t0 = resolve_predicted_slope(config, source);
  write_fit_outputs(manifest, config, sweep, r_t0, source);

  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));
}

void cmd_autocorr(const RunConfig& config) {
  const auto start = Clock::now();
  const ModelBundle bundle = make_model(config);
  const Vector x0 = seeded_initial_state(config.n, config.seed);
  const AcfResult acf =
      autocorrelation(*bundle.system, x0, config.integrator(), config.lag_max, config.acf_window);

  write_acf_csv(join_path(config.out, "acf.csv"), acf);

  ManifestBuilder manifest = start_manifest("autocorr", config, &bundle);
  manifest.set_shard_seeds({config.seed});
  manifest.add_result("mean", acf.mean);
  manifest.add_result("variance", acf.variance);
  manifest.add_result("samples", std::to_string(acf.samples));
  manifest.add_output(config.out, "acf.csv");
  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));

  std::printf("autocorr: %lld samples, mean = %s, variance = %s\n",
              static_cast<long long>(acf.samples), format_g17(acf.mean).c_str(),
              format_g17(acf.variance).c_str());
}

void cmd_report(const RunConfig& config) {
  const auto start = Clock::now();
  const SweepResult sweep = read_sweep_csv(join_path(config.out, "sweep.csv"));

  ManifestBuilder manifest("report", config.seed);
  manifest.set_config(config.snapshot());
  manifest.add_result("lambda0", sweep.lambda0);

  std::string source;
  const double r_t0 = resolve_predicted_slope(config, source);
  write_fit_outputs(manifest, config, sweep, r_t0, source);

  manifest.set_wall_clock(seconds_since(start));
  manifest.write(join_path(config.out, "manifest.json"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lyapunov exponent response prediction for chaotic ODEs"};
  app.set_version_flag("--version", lyapresp::k_version);
  app.require_subcommand(1);

  CliOverrides overrides;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "Estimate the (alpha, beta) climate rescaling");
  auto* lyapunov_cmd =
      app.add_subcommand("lyapunov", "Measure the largest Lyapunov exponent");
  auto* response_cmd = app.add_subcommand(
      "response", "Accumulate correlation sums and build the response curve r(t)");
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Measure the exponent under a grid of constant forcings and fit the slope");
  auto* autocorr_cmd =
      app.add_subcommand("autocorr", "Node-pooled autocorrelation of the state");
  auto* report_cmd =
      app.add_subcommand("report", "Re-fit a stored sweep against a predicted slope");
  for (CLI::App* cmd :
       {calibrate_cmd, lyapunov_cmd, response_cmd, sweep_cmd, autocorr_cmd, report_cmd})
    add_common_flags(cmd, overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const lyapresp::RunConfig config = resolve_config(overrides);
    lyapresp::ensure_directory(config.out);
    if (*calibrate_cmd) cmd_calibrate(config);
    else if (*lyapunov_cmd) cmd_lyapunov(config);
    else if (*response_cmd) cmd_response(config);
    else if (*sweep_cmd) cmd_sweep(config);
    else if (*autocorr_cmd) cmd_autocorr(config);
    else if (*report_cmd) cmd_report(config);
    return 0;
  } catch (const lyapresp::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const lyapresp::CalibrationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const lyapresp::TrajectoryDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const lyapresp::NoPlateauError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
