#include "lyapresp/io.hpp"

#include "lyapresp/version.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lyapresp {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file '" + path + "'");
  return out;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string sanitize_csv_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return s;
}

void require_averaged(const CorrelationGrid& grid) {
  if (!grid.averaged())
    throw std::logic_error("correlation grid must be averaged before serialization");
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (fields.size() + 1 < max_fields) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) break;
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  fields.push_back(line.substr(start));
  return fields;
}

double to_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("malformed number '" + s + "' in '" + path + "'");
  }
}

}  // namespace

std::string format_g17(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  const std::string contents = read_all(path);
  return fnv1a64(contents.data(), contents.size());
}

std::string to_hex(std::uint64_t v) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(v));
  return buffer;
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + path + "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_calibration_csv(const std::string& path, double forcing, int n,
                           const CalibrationResult& cal) {
  auto out = open_out(path);
  out << "F,N,alpha,beta,residual_mean,residual_var,sample_window,validation_window,shards,seed\n"
      << format_g17(forcing) << ',' << n << ',' << format_g17(cal.alpha) << ','
      << format_g17(cal.beta) << ',' << format_g17(cal.residual_mean) << ','
      << format_g17(cal.residual_var) << ',' << format_g17(cal.sample_window) << ','
      << format_g17(cal.validation_window) << ',' << cal.shards << ',' << cal.seed << '\n';
}

void write_lyapunov_csv(const std::string& path, const LyapunovResult& result, int trajectories,
                        std::uint64_t seed) {
  auto out = open_out(path);
  out << "lambda,stderr,window,blocks,trajectories,seed\n"
      << format_g17(result.lambda) << ',' << format_g17(result.stderr_lambda) << ','
      << format_g17(result.window) << ',' << result.blocks << ',' << trajectories << ',' << seed
      << '\n';
}

void write_lyapunov_trace_csv(const std::string& path, const LyapunovResult& result) {
  auto out = open_out(path);
  out << "t,lambda_running\n";
  for (const auto& [t, lambda] : result.trace)
    out << format_g17(t) << ',' << format_g17(lambda) << '\n';
}

void write_c1_csv(const std::string& path, const CorrelationGrid& averaged) {
  require_averaged(averaged);
  const auto& cfg = averaged.config();
  auto out = open_out(path);
  out << "m,tau,mean";
  for (int j = 0; j < cfg.dim; ++j) out << ",c" << j;
  out << '\n';
  for (int m = 0; m <= cfg.depth; ++m) {
    const Vector& v = averaged.c1(m);
    out << m << ',' << format_g17(static_cast<double>(m) * cfg.h) << ','
        << format_g17(v.mean());
    for (int j = 0; j < cfg.dim; ++j) out << ',' << format_g17(v[j]);
    out << '\n';
  }
}

void write_c2_csv(const std::string& path, const CorrelationGrid& averaged) {
  require_averaged(averaged);
  const auto& cfg = averaged.config();
  auto out = open_out(path);
  out << "m,n,tau,s,mean";
  for (int j = 0; j < cfg.dim; ++j) out << ",c" << j;
  out << '\n';
  for (int m = 0; m <= cfg.depth; ++m) {
    for (int n = m; n <= cfg.depth; ++n) {
      const Vector& v = averaged.c2(m, n);
      out << m << ',' << n << ',' << format_g17(static_cast<double>(m) * cfg.h) << ','
          << format_g17(static_cast<double>(n) * cfg.h) << ',' << format_g17(v.mean());
      for (int j = 0; j < cfg.dim; ++j) out << ',' << format_g17(v[j]);
      out << '\n';
    }
  }
}

void write_response_csv(const std::string& path, const ResponseCurve& curve) {
  auto out = open_out(path);
  const int dim = curve.r.empty() ? 0 : static_cast<int>(curve.r.front().size());
  out << "i,t,r_mean";
  for (int j = 0; j < dim; ++j) out << ",r" << j;
  out << '\n';
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    out << i << ',' << format_g17(curve.times[i]) << ',' << format_g17(curve.r_scalar[i]);
    for (int j = 0; j < dim; ++j) out << ',' << format_g17(curve.r[i][j]);
    out << '\n';
  }
}

void write_response_plot(const std::string& path, const ResponseCurve& curve) {
  auto out = open_out(path);
  out << "# t r\n";
  for (std::size_t i = 0; i < curve.times.size(); ++i)
    out << format_g17(curve.times[i]) << ' ' << format_g17(curve.r_scalar[i]) << '\n';
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
  auto out = open_out(path);
  out << "p,node,lambda,stderr,lambda0,stderr0,diverged,seed,error\n";
  for (const auto& row : sweep.rows) {
    out << format_g17(row.p) << ',' << row.node << ',' << format_g17(row.lambda) << ','
        << format_g17(row.stderr_lambda) << ',' << format_g17(sweep.lambda0) << ','
        << format_g17(sweep.stderr0) << ',' << (row.diverged ? 1 : 0) << ',' << row.seed << ','
        << sanitize_csv_field(row.error) << '\n';
  }
}

SweepResult read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      line != "p,node,lambda,stderr,lambda0,stderr0,diverged,seed,error")
    throw std::runtime_error("unrecognized sweep CSV header in '" + path + "'");
  SweepResult sweep;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line, 9);
    if (f.size() != 9) throw std::runtime_error("malformed sweep CSV row in '" + path + "'");
    SweepRow row;
    row.p = to_double(f[0], path);
    row.node = static_cast<int>(to_double(f[1], path));
    row.lambda = to_double(f[2], path);
    row.stderr_lambda = to_double(f[3], path);
    const double lambda0 = to_double(f[4], path);
    const double stderr0 = to_double(f[5], path);
    row.diverged = to_double(f[6], path) != 0.0;
    row.seed = static_cast<std::uint64_t>(std::stoull(f[7]));
    row.error = f[8];
    if (first) {
      sweep.lambda0 = lambda0;
      sweep.stderr0 = stderr0;
      sweep.node = row.node;
      first = false;
    }
    sweep.rows.push_back(std::move(row));
  }
  if (sweep.rows.empty()) throw std::runtime_error("sweep CSV '" + path + "' has no rows");
  return sweep;
}

void write_acf_csv(const std::string& path, const AcfResult& acf) {
  auto out = open_out(path);
  out << "lag_index,lag_time,acf\n";
  for (std::size_t i = 0; i < acf.lags.size(); ++i)
    out << i << ',' << format_g17(acf.lags[i]) << ',' << format_g17(acf.acf[i]) << '\n';
}

void write_report_csv(const std::string& path, const FitReport& report) {
  auto out = open_out(path);
  out << "predicted_slope,fit_max_p,linear_slope,linear_slope_stderr,relative_slope_error,"
         "quad_linear,quad_coeff,quad_coeff_stderr,quad_significance,rows_used\n"
      << format_g17(report.predicted_slope) << ',' << format_g17(report.fit_max_p) << ','
      << format_g17(report.linear_slope) << ',' << format_g17(report.linear_slope_stderr) << ','
      << format_g17(report.relative_slope_error) << ',' << format_g17(report.quad_linear) << ','
      << format_g17(report.quad_coeff) << ',' << format_g17(report.quad_coeff_stderr) << ','
      << format_g17(report.quad_significance) << ',' << report.used_rows.size() << '\n';
}

void write_report_json(const std::string& path, const FitReport& report,
                       const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["predicted_slope"] = report.predicted_slope;
  j["fit_max_p"] = report.fit_max_p;
  j["linear_slope"] = report.linear_slope;
  j["linear_slope_stderr"] = report.linear_slope_stderr;
  j["relative_slope_error"] = report.relative_slope_error;
  j["lambda0"] = sweep.lambda0;
  j["quadratic"] = {{"linear", report.quad_linear},
                    {"coeff", report.quad_coeff},
                    {"coeff_stderr", report.quad_coeff_stderr},
                    {"significance", report.quad_significance}};
  nlohmann::ordered_json used = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.used_rows.size(); ++i) {
    const auto& row = sweep.rows.at(report.used_rows[i]);
    used.push_back({{"p", row.p},
                    {"delta_lambda", row.lambda - sweep.lambda0},
                    {"residual", report.residuals.at(i)}});
  }
  j["used_rows"] = std::move(used);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_plateau_json(const std::string& path, const PlateauRecord& record) {
  nlohmann::ordered_json j;
  j["t0"] = record.selection.t0;
  j["index"] = record.selection.index;
  j["r_at_t0"] = record.selection.r_at_t0;
  j["window_begin"] = record.selection.window_begin;
  j["window_end"] = record.selection.window_end;
  j["window_mean"] = record.selection.window_mean;
  j["method"] = record.selection.method;
  j["lambda"] = record.lambda;
  j["samples"] = record.samples;
  j["endpoint"] = record.endpoint;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

PlateauRecord read_plateau_json(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(path));
    PlateauRecord record;
    record.selection.t0 = j.at("t0").get<double>();
    record.selection.index = j.at("index").get<int>();
    record.selection.r_at_t0 = j.at("r_at_t0").get<double>();
    record.selection.window_begin = j.at("window_begin").get<int>();
    record.selection.window_end = j.at("window_end").get<int>();
    record.selection.window_mean = j.at("window_mean").get<double>();
    record.selection.method = j.at("method").get<std::string>();
    record.lambda = j.at("lambda").get<double>();
    record.samples = j.at("samples").get<std::int64_t>();
    record.endpoint = j.at("endpoint").get<std::string>();
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed plateau report '" + path + "': " + e.what());
  }
}

ManifestBuilder::ManifestBuilder(std::string command, std::uint64_t seed)
    : command_(std::move(command)), seed_(seed) {}

void ManifestBuilder::set_config(std::vector<std::pair<std::string, std::string>> snapshot) {
  config_ = std::move(snapshot);
}

void ManifestBuilder::set_calibration(double forcing, int n, const CalibrationResult& cal) {
  has_calibration_ = true;
  cal_forcing_ = forcing;
  cal_n_ = n;
  calibration_ = cal;
}

void ManifestBuilder::set_shard_seeds(std::vector<std::uint64_t> seeds) {
  shard_seeds_ = std::move(seeds);
}

void ManifestBuilder::set_wall_clock(double seconds) { wall_clock_ = seconds; }

void ManifestBuilder::add_result(const std::string& key, const std::string& value) {
  results_.emplace_back(key, value);
}

void ManifestBuilder::add_result(const std::string& key, double value) {
  results_.emplace_back(key, format_g17(value));
}

void ManifestBuilder::add_output(const std::string& dir, const std::string& name) {
  outputs_.emplace_back(name, to_hex(fnv1a64_file(join_path(dir, name))));
}

void ManifestBuilder::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["version"] = k_version;
  j["seed"] = seed_;
  nlohmann::ordered_json config;
  for (const auto& [key, value] : config_) config[key] = value;
  j["config"] = std::move(config);
  if (has_calibration_) {
    j["calibration"] = {{"F", cal_forcing_},
                        {"N", cal_n_},
                        {"alpha", calibration_.alpha},
                        {"beta", calibration_.beta},
                        {"residual_mean", calibration_.residual_mean},
                        {"residual_var", calibration_.residual_var},
                        {"sample_window", calibration_.sample_window},
                        {"validation_window", calibration_.validation_window},
                        {"shards", calibration_.shards},
                        {"seed", calibration_.seed}};
  }
  j["shard_seeds"] = shard_seeds_;
  j["wall_clock_seconds"] = wall_clock_;
  nlohmann::ordered_json results;
  for (const auto& [key, value] : results_) results[key] = value;
  j["results"] = std::move(results);
  nlohmann::ordered_json outputs;
  for (const auto& [name, checksum] : outputs_) outputs[name] = checksum;
  j["outputs"] = std::move(outputs);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace lyapresp
