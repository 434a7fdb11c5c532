#pragma once

#include "lyapresp/experiments.hpp"
#include "lyapresp/lorenz96.hpp"
#include "lyapresp/lyapunov.hpp"
#include "lyapresp/response.hpp"
#include "lyapresp/types.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lyapresp {

/// Shortest representation with 17 significant digits; round-trips doubles
/// exactly, so identical numbers serialize to identical bytes.
std::string format_g17(double v);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);
std::string to_hex(std::uint64_t v);

void ensure_directory(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);

// CSV emitters: one-line header, fixed column order, %.17g floats. All throw
// std::runtime_error when the file cannot be written.
void write_calibration_csv(const std::string& path, double forcing, int n,
                           const CalibrationResult& cal);
void write_lyapunov_csv(const std::string& path, const LyapunovResult& result, int trajectories,
                        std::uint64_t seed);
void write_lyapunov_trace_csv(const std::string& path, const LyapunovResult& result);
void write_c1_csv(const std::string& path, const CorrelationGrid& averaged);
void write_c2_csv(const std::string& path, const CorrelationGrid& averaged);
void write_response_csv(const std::string& path, const ResponseCurve& curve);
/// Two whitespace-separated columns (t, scalar r) for direct plotting.
void write_response_plot(const std::string& path, const ResponseCurve& curve);
void write_sweep_csv(const std::string& path, const SweepResult& sweep);
void write_acf_csv(const std::string& path, const AcfResult& acf);
void write_report_csv(const std::string& path, const FitReport& report);
void write_report_json(const std::string& path, const FitReport& report,
                       const SweepResult& sweep);

/// Plateau report persisted by the response command and consumed by
/// sweep/report runs (the scalar r(t0) is the predicted Delta-lambda slope).
struct PlateauRecord {
  ResponseTimeSelection selection;
  double lambda = 0.0;        // exponent observed during accumulation
  std::int64_t samples = 0;
  std::string endpoint;       // "printed" | "continuum"
};

void write_plateau_json(const std::string& path, const PlateauRecord& record);
PlateauRecord read_plateau_json(const std::string& path);

/// Inverse of write_sweep_csv (used by the report command).
SweepResult read_sweep_csv(const std::string& path);

/// Collects the run description and writes manifest.json: config snapshot,
/// code version, optional calibration result, wall clock, per-shard seeds and
/// FNV-1a64 checksums of every emitted file.
class ManifestBuilder {
 public:
  ManifestBuilder(std::string command, std::uint64_t seed);

  void set_config(std::vector<std::pair<std::string, std::string>> snapshot);
  void set_calibration(double forcing, int n, const CalibrationResult& cal);
  void set_shard_seeds(std::vector<std::uint64_t> seeds);
  void set_wall_clock(double seconds);
  void add_result(const std::string& key, const std::string& value);
  void add_result(const std::string& key, double value);
  /// Checksums dir/name (the file must already exist).
  void add_output(const std::string& dir, const std::string& name);

  void write(const std::string& path) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  std::vector<std::pair<std::string, std::string>> config_;
  bool has_calibration_ = false;
  double cal_forcing_ = 0.0;
  int cal_n_ = 0;
  CalibrationResult calibration_{};
  std::vector<std::uint64_t> shard_seeds_;
  double wall_clock_ = 0.0;
  std::vector<std::pair<std::string, std::string>> results_;
  std::vector<std::pair<std::string, std::string>> outputs_;  // name -> checksum hex
};

}  // namespace lyapresp
