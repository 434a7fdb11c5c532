#include "lyapresp/config.hpp"

#include "lyapresp/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lyapresp {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double parse_double(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(field, "empty value");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v))
    throw ConfigError(field, "not a finite number: '" + t + "'");
  return v;
}

long long parse_integer(const std::string& field, const std::string& text) {
  const double v = parse_double(field, text);
  const double r = std::nearbyint(v);
  if (v != r) throw ConfigError(field, "not an integer: '" + trim(text) + "'");
  return static_cast<long long>(r);
}

int parse_int(const std::string& field, const std::string& text) {
  return static_cast<int>(parse_integer(field, text));
}

std::uint64_t parse_u64(const std::string& field, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(field, "empty value");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || t.front() == '-')
    throw ConfigError(field, "not an unsigned integer: '" + t + "'");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& field, const std::string& text) {
  const std::string t = lower(trim(text));
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  throw ConfigError(field, "not a boolean: '" + trim(text) + "'");
}

std::vector<double> parse_double_list(const std::string& field, const std::string& text) {
  std::vector<double> values;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) values.push_back(parse_double(field, item));
  if (values.empty()) throw ConfigError(field, "empty list");
  return values;
}

const char* const k_sections[] = {"regime",   "integrator", "calibration", "lyapunov",
                                  "response", "sweep",      "autocorr",    "run"};

bool known_section(const std::string& name) {
  return std::find_if(std::begin(k_sections), std::end(k_sections),
                      [&](const char* s) { return name == s; }) != std::end(k_sections);
}

void apply_key(RunConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
  const std::string f = section + "." + key;
  if (section == "regime") {
    if (key == "forcing") c.forcing = parse_double(f, value);
    else if (key == "n") c.n = parse_int(f, value);
    else if (key == "alpha") c.alpha = parse_double(f, value);
    else if (key == "beta") c.beta = parse_double(f, value);
    else if (key == "system") c.system = lower(trim(value));
    else throw ConfigError(f, "unknown key");
  } else if (section == "integrator") {
    if (key == "dt") c.dt = parse_double(f, value);
    else if (key == "spinup") c.spinup = parse_double(f, value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "calibration") {
    if (key == "sample_window") c.calibration_sample_window = parse_double(f, value);
    else if (key == "validation_window") c.calibration_validation_window = parse_double(f, value);
    else if (key == "shards") c.calibration_shards = parse_int(f, value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "lyapunov") {
    if (key == "window") c.lyapunov_window = parse_double(f, value);
    else if (key == "renorm_every") c.renorm_every = parse_int(f, value);
    else if (key == "block_time") c.block_time = parse_double(f, value);
    else if (key == "trace_stride") c.trace_stride = parse_integer(f, value);
    else if (key == "tangent_align") c.tangent_align = parse_double(f, value);
    else if (key == "trajectories") c.trajectories = parse_int(f, value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "response") {
    if (key == "h") c.h = parse_double(f, value);
    else if (key == "depth") c.depth = parse_int(f, value);
    else if (key == "samples") c.response_samples = parse_integer(f, value);
    else if (key == "chunk_samples") c.chunk_samples = parse_integer(f, value);
    else if (key == "endpoint") c.endpoint = lower(trim(value));
    else if (key == "t0_method") c.t0_method = lower(trim(value));
    else if (key == "t0") c.t0 = parse_double(f, value);
    else if (key == "plateau_tol") c.plateau_tol = parse_double(f, value);
    else if (key == "plateau_min_points") c.plateau_min_points = parse_int(f, value);
    else if (key == "plateau_t_min") c.plateau_t_min = parse_double(f, value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "sweep") {
    if (key == "node") c.node = parse_int(f, value);
    else if (key == "magnitudes") c.magnitudes = parse_double_list(f, value);
    else if (key == "window") c.sweep_window = parse_double(f, value);
    else if (key == "trajectories") c.sweep_trajectories = parse_int(f, value);
    else if (key == "fit_max_p") c.fit_max_p = parse_double(f, value);
    else if (key == "r_t0") c.r_t0 = parse_double(f, value);
    else if (key == "response_dir") c.response_dir = trim(value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "autocorr") {
    if (key == "lag_max") c.lag_max = parse_double(f, value);
    else if (key == "window") c.acf_window = parse_double(f, value);
    else throw ConfigError(f, "unknown key");
  } else if (section == "run") {
    if (key == "seed") c.seed = parse_u64(f, value);
    else if (key == "out") c.out = trim(value);
    else if (key == "profile") c.profile = profile_from_string(trim(value));
    else if (key == "shards") c.shards = parse_int(f, value);
    else if (key == "allow_partial") c.allow_partial = parse_bool(f, value);
    else throw ConfigError(f, "unknown key");
  } else {
    throw ConfigError(section, "unknown section");
  }
}

}  // namespace

Profile profile_from_string(const std::string& name) {
  const std::string n = lower(trim(name));
  if (n == "paper") return Profile::paper;
  if (n == "desk") return Profile::desk;
  throw ConfigError("run.profile", "unknown profile '" + name + "' (expected paper or desk)");
}

std::string to_string(Profile profile) {
  return profile == Profile::paper ? "paper" : "desk";
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config", "malformed section header at line " + std::to_string(line_no));
      section = lower(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) throw ConfigError(section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config",
                        "expected 'key = value' at line " + std::to_string(line_no));
    if (section.empty())
      throw ConfigError("config", "key outside any [section] at line " + std::to_string(line_no));
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = line.substr(eq + 1);
    if (key.empty()) throw ConfigError("config", "empty key at line " + std::to_string(line_no));
    apply_key(config, section, key, value);
  }
}

RunConfig RunConfig::with_profile(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::desk) {
    c.lyapunov_window = 5e4;
    c.response_samples = 200000;
    c.acf_window = 2e4;
  } else {
    c.lyapunov_window = 1e6;
    c.response_samples = 4000000;
    c.acf_window = 1e5;
  }
  return c;
}

RunConfig RunConfig::load(const std::optional<std::string>& config_path,
                          const std::optional<std::string>& profile_flag) {
  std::string text;
  if (config_path) {
    std::ifstream in(*config_path);
    if (!in) throw ConfigError("config", "cannot open file '" + *config_path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    text = buffer.str();
  }
  Profile profile = Profile::paper;
  if (profile_flag) {
    profile = profile_from_string(*profile_flag);
  } else if (!text.empty()) {
    RunConfig probe;  // parsed only to read a [run] profile key, if any
    apply_config_text(probe, text);
    profile = probe.profile;
  }
  RunConfig config = with_profile(profile);
  if (!text.empty()) apply_config_text(config, text);
  config.profile = profile;  // an explicit --profile flag wins over the file
  return config;
}

int RunConfig::substeps() const {
  if (dt <= 0.0) throw ConfigError("integrator.dt", "must be > 0");
  if (h <= 0.0) throw ConfigError("response.h", "must be > 0");
  const long long s = std::llround(h / dt);
  if (s < 1 || std::abs(static_cast<double>(s) * dt - h) > 1e-9)
    throw ConfigError("response.h", "must be a whole multiple of integrator.dt");
  return static_cast<int>(s);
}

void RunConfig::validate() const {
  if (system != "l96" && system != "linear")
    throw ConfigError("regime.system", "must be 'l96' or 'linear'");
  if (n < 4) throw ConfigError("regime.n", "must be >= 4");
  if (system == "l96" && !forcing)
    throw ConfigError("regime.forcing", "missing required field");
  if (forcing && !std::isfinite(*forcing))
    throw ConfigError("regime.forcing", "must be finite");
  if (alpha.has_value() != beta.has_value())
    throw ConfigError("regime.alpha", "alpha and beta must be set together");
  if (beta && *beta <= 0.0) throw ConfigError("regime.beta", "must be > 0");

  if (dt <= 0.0) throw ConfigError("integrator.dt", "must be > 0");
  if (spinup < 0.0) throw ConfigError("integrator.spinup", "must be >= 0");

  if (calibration_sample_window <= 0.0)
    throw ConfigError("calibration.sample_window", "must be > 0");
  if (calibration_validation_window <= 0.0)
    throw ConfigError("calibration.validation_window", "must be > 0");
  if (calibration_shards < 1) throw ConfigError("calibration.shards", "must be >= 1");

  if (lyapunov_window <= 0.0) throw ConfigError("lyapunov.window", "must be > 0");
  if (renorm_every < 1) throw ConfigError("lyapunov.renorm_every", "must be >= 1");
  if (block_time <= 0.0) throw ConfigError("lyapunov.block_time", "must be > 0");
  if (trace_stride < 1) throw ConfigError("lyapunov.trace_stride", "must be >= 1");
  if (tangent_align < 0.0) throw ConfigError("lyapunov.tangent_align", "must be >= 0");
  if (trajectories < 1) throw ConfigError("lyapunov.trajectories", "must be >= 1");

  substeps();  // throws if h is not a whole multiple of dt
  if (depth < 1) throw ConfigError("response.depth", "must be >= 1");
  if (response_samples < 1) throw ConfigError("response.samples", "must be >= 1");
  if (chunk_samples < 1) throw ConfigError("response.chunk_samples", "must be >= 1");
  if (endpoint != "printed" && endpoint != "continuum")
    throw ConfigError("response.endpoint", "must be 'printed' or 'continuum'");
  if (t0_method != "auto" && t0_method != "manual")
    throw ConfigError("response.t0_method", "must be 'auto' or 'manual'");
  if (t0_method == "manual" && !t0)
    throw ConfigError("response.t0", "required when t0_method = manual");
  if (t0) {
    const double span = static_cast<double>(depth) * h;
    const long long i = std::llround(*t0 / h);
    if (*t0 < -1e-9 || *t0 > span + 1e-9 ||
        std::abs(static_cast<double>(i) * h - *t0) > 1e-9)
      throw ConfigError("response.t0",
                        "must lie on the lag grid within [0, depth*h]");
  }
  if (plateau_tol <= 0.0) throw ConfigError("response.plateau_tol", "must be > 0");
  if (plateau_min_points < 2) throw ConfigError("response.plateau_min_points", "must be >= 2");
  if (plateau_t_min < 0.0) throw ConfigError("response.plateau_t_min", "must be >= 0");

  if (node < 0 || node >= n) throw ConfigError("sweep.node", "must be in [0, n)");
  if (magnitudes.empty()) throw ConfigError("sweep.magnitudes", "must be non-empty");
  if (sweep_window && *sweep_window <= 0.0) throw ConfigError("sweep.window", "must be > 0");
  if (sweep_trajectories && *sweep_trajectories < 1)
    throw ConfigError("sweep.trajectories", "must be >= 1");
  if (fit_max_p && *fit_max_p <= 0.0) throw ConfigError("sweep.fit_max_p", "must be > 0");

  if (lag_max <= 0.0) throw ConfigError("autocorr.lag_max", "must be > 0");
  {
    const long long lags = std::llround(lag_max / h);
    if (lags < 1 || std::abs(static_cast<double>(lags) * h - lag_max) > 1e-9)
      throw ConfigError("autocorr.lag_max", "must be a whole multiple of response.h");
  }
  if (acf_window <= 0.0) throw ConfigError("autocorr.window", "must be > 0");

  if (shards < 1) throw ConfigError("run.shards", "must be >= 1");
  if (out.empty()) throw ConfigError("run.out", "must be non-empty");
}

IntegratorConfig RunConfig::integrator() const {
  IntegratorConfig ic;
  ic.dt = dt;
  ic.substeps = substeps();
  ic.spinup = spinup;
  return ic;
}

CalibrationOptions RunConfig::calibration_options() const {
  CalibrationOptions co;
  co.dt = dt;
  co.spinup = spinup;
  co.sample_window = calibration_sample_window;
  co.validation_window = calibration_validation_window;
  co.shards = calibration_shards;
  co.seed = seed;
  return co;
}

LyapunovSettings RunConfig::lyapunov_settings() const {
  LyapunovSettings ls;
  ls.dt = dt;
  ls.spinup = spinup;
  ls.tangent_align = tangent_align;
  ls.window = lyapunov_window;
  ls.renorm_every = renorm_every;
  ls.block_time = block_time;
  ls.trace_stride = trace_stride;
  return ls;
}

ResponseRunOptions RunConfig::response_options() const {
  ResponseRunOptions ro;
  ro.integrator = integrator();
  ro.tangent_align = tangent_align;
  ro.depth = depth;
  ro.total_samples = response_samples;
  ro.chunk_samples = chunk_samples;
  ro.endpoint = endpoint_mode();
  ro.seed = seed;
  ro.threads = shards;
  return ro;
}

PlateauOptions RunConfig::plateau_options() const {
  return PlateauOptions{plateau_tol, plateau_min_points, plateau_t_min};
}

SweepOptions RunConfig::sweep_options() const {
  SweepOptions so;
  so.magnitudes = magnitudes;
  so.node = node;
  so.lyapunov = lyapunov_settings();
  if (sweep_window) so.lyapunov.window = *sweep_window;
  so.ensemble.trajectories = sweep_trajectories.value_or(trajectories);
  so.ensemble.seed = seed;
  so.ensemble.threads = shards;
  so.allow_partial = allow_partial;
  return so;
}

EndpointMode RunConfig::endpoint_mode() const {
  if (endpoint == "printed") return EndpointMode::printed;
  if (endpoint == "continuum") return EndpointMode::continuum;
  throw ConfigError("response.endpoint", "must be 'printed' or 'continuum'");
}

double RunConfig::resolved_fit_max_p() const {
  if (fit_max_p) return *fit_max_p;
  if (!forcing)
    throw ConfigError("sweep.fit_max_p",
                      "set explicitly or provide regime.forcing for the default");
  return default_fit_max_p(*forcing);
}

std::vector<std::pair<std::string, std::string>> RunConfig::snapshot() const {
  std::vector<std::pair<std::string, std::string>> kv;
  auto add = [&kv](const std::string& key, const std::string& value) {
    kv.emplace_back(key, value);
  };
  auto add_d = [&](const std::string& key, double v) { add(key, format_g17(v)); };
  auto add_i = [&](const std::string& key, long long v) { add(key, std::to_string(v)); };
  auto add_od = [&](const std::string& key, const std::optional<double>& v) {
    add(key, v ? format_g17(*v) : std::string{});
  };

  add_od("regime.forcing", forcing);
  add_i("regime.n", n);
  add_od("regime.alpha", alpha);
  add_od("regime.beta", beta);
  add("regime.system", system);

  add_d("integrator.dt", dt);
  add_d("integrator.spinup", spinup);

  add_d("calibration.sample_window", calibration_sample_window);
  add_d("calibration.validation_window", calibration_validation_window);
  add_i("calibration.shards", calibration_shards);

  add_d("lyapunov.window", lyapunov_window);
  add_i("lyapunov.renorm_every", renorm_every);
  add_d("lyapunov.block_time", block_time);
  add_i("lyapunov.trace_stride", trace_stride);
  add_d("lyapunov.tangent_align", tangent_align);
  add_i("lyapunov.trajectories", trajectories);

  add_d("response.h", h);
  add_i("response.depth", depth);
  add_i("response.samples", response_samples);
  add_i("response.chunk_samples", chunk_samples);
  add("response.endpoint", endpoint);
  add("response.t0_method", t0_method);
  add_od("response.t0", t0);
  add_d("response.plateau_tol", plateau_tol);
  add_i("response.plateau_min_points", plateau_min_points);
  add_d("response.plateau_t_min", plateau_t_min);

  add_i("sweep.node", node);
  {
    std::string joined;
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
      if (i) joined += ", ";
      joined += format_g17(magnitudes[i]);
    }
    add("sweep.magnitudes", joined);
  }
  add_od("sweep.window", sweep_window);
  add("sweep.trajectories",
      sweep_trajectories ? std::to_string(*sweep_trajectories) : std::string{});
  add_od("sweep.fit_max_p", fit_max_p);
  add_od("sweep.r_t0", r_t0);
  add("sweep.response_dir", response_dir);

  add_d("autocorr.lag_max", lag_max);
  add_d("autocorr.window", acf_window);

  add("run.seed", std::to_string(seed));
  add("run.out", out);
  add("run.profile", to_string(profile));
  add_i("run.shards", shards);
  add("run.allow_partial", allow_partial ? "true" : "false");
  return kv;
}

}  // namespace lyapresp
