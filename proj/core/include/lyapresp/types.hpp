#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lyapresp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a trajectory leaves the representable range (blow-up).
/// Long-running drivers attach the step index and model time at which the
/// non-finite state was produced; a bare stepper throws with index -1.
class TrajectoryDivergence : public std::runtime_error {
 public:
  TrajectoryDivergence(std::int64_t step_index, double time)
      : std::runtime_error("trajectory diverged (non-finite state) at step " +
                           std::to_string(step_index) + ", t = " + std::to_string(time)),
        step_index_(step_index),
        time_(time) {}

  std::int64_t step_index() const noexcept { return step_index_; }
  double time() const noexcept { return time_; }

 private:
  std::int64_t step_index_;
  double time_;
};

/// Thrown when an incremental tangent map is too ill-conditioned to invert.
class DegenerateMapError : public std::runtime_error {
 public:
  explicit DegenerateMapError(double rcond)
      : std::runtime_error("incremental tangent map is numerically singular (rcond = " +
                           std::to_string(rcond) + ")"),
        rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

/// Thrown when climatological calibration cannot produce a valid rescaling
/// (degenerate attractor) or when its self-validation residuals are too large.
class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, double residual_mean, double residual_var)
      : std::runtime_error(what + " (residual_mean = " + std::to_string(residual_mean) +
                           ", residual_var = " + std::to_string(residual_var) + ")"),
        residual_mean_(residual_mean),
        residual_var_(residual_var) {}

  double residual_mean() const noexcept { return residual_mean_; }
  double residual_var() const noexcept { return residual_var_; }

 private:
  double residual_mean_;
  double residual_var_;
};

/// Thrown by automatic response-time selection when no window of the response
/// curve satisfies the plateau criterion.
class NoPlateauError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown on invalid or inconsistent run configuration; carries the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lyapresp
