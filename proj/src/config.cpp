#include "cnnide/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <set>

#include "cnnide/io.hpp"

namespace cnnide {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view v, const std::string& where) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(Errc::ConfigError, where + ": cannot parse '" + std::string(v) + "' as a number");
  return out;
}

bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  fail(Errc::ConfigError, where + ": expected true/false, got '" + std::string(v) + "'");
}

std::vector<int> parse_int_list(std::string_view v, const std::string& where) {
  std::vector<int> out;
  std::size_t a = 0;
  while (a <= v.size()) {
    std::size_t b = v.find(',', a);
    if (b == std::string_view::npos) b = v.size();
    out.push_back(parse_number<int>(trim(v.substr(a, b - a)), where));
    a = b + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, const std::string&)>;

template <class T>
Setter num(T RunConfig::* field) {
  return [field](RunConfig& c, std::string_view v, const std::string& w) { c.*field = parse_number<T>(v, w); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"grid.n", num(&RunConfig::grid_n)},
      {"model.tau", num(&RunConfig::model_tau)},
      {"model.r", num(&RunConfig::model_r)},
      {"model.bandwidth", num(&RunConfig::model_bandwidth)},
      {"model.theta_min", num(&RunConfig::model_theta_min)},
      {"model.filters",
       [](RunConfig& c, std::string_view v, const std::string& w) { c.model_filters = parse_int_list(v, w); }},
      {"model.patch", num(&RunConfig::model_patch)},
      {"train.batch", num(&RunConfig::train_batch)},
      {"train.lr", num(&RunConfig::train_lr)},
      {"train.max_epochs", num(&RunConfig::train_max_epochs)},
      {"train.valid_frac", num(&RunConfig::train_valid_frac)},
      {"train.tol", num(&RunConfig::train_tol)},
      {"train.sigma2_0", num(&RunConfig::train_sigma2_0)},
      {"enkf.n_members", num(&RunConfig::enkf_n_members)},
      {"enkf.taper_c", num(&RunConfig::enkf_taper_c)},
      {"enkf.taper", [](RunConfig& c, std::string_view v, const std::string& w) { c.enkf_taper = parse_bool(v, w); }},
      {"enkf.jitter", num(&RunConfig::enkf_jitter)},
      {"obs.sigma2_eps", num(&RunConfig::obs_sigma2_eps)},
      {"obs.fraction", num(&RunConfig::obs_fraction)},
      {"mask.border", num(&RunConfig::mask_border)},
      {"sim.T", num(&RunConfig::sim_T)},
      {"sim.regime", [](RunConfig& c, std::string_view v, const std::string&) { c.sim_regime = std::string(v); }},
      {"sim.amplitude", num(&RunConfig::sim_amplitude)},
      {"sim.direction_deg", num(&RunConfig::sim_direction_deg)},
      {"sim.rotation_deg", num(&RunConfig::sim_rotation_deg)},
      {"sim.diffusion", num(&RunConfig::sim_diffusion)},
      {"sim.forcing_sigma2", num(&RunConfig::sim_forcing_sigma2)},
      {"sim.forcing_rho", num(&RunConfig::sim_forcing_rho)},
      {"sim.n_blobs", num(&RunConfig::sim_n_blobs)},
      {"sim.blob_width", num(&RunConfig::sim_blob_width)},
      {"sim.periodic",
       [](RunConfig& c, std::string_view v, const std::string& w) { c.sim_periodic = parse_bool(v, w); }},
      {"seed", num(&RunConfig::seed)},
  };
  return table;
}

void check(bool ok, const std::string& key, const std::string& why) {
  if (!ok) fail(Errc::ConfigError, "config key '" + key + "': " + why);
}

void validate(const RunConfig& c) {
  check(c.grid_n >= 4, "grid.n", "must be >= 4");
  check(c.model_tau >= 2, "model.tau", "must be >= 2");
  check(c.model_r >= 1, "model.r", "must be >= 1");
  check(c.model_theta_min > 0.0, "model.theta_min", "must be positive");
  check(!c.model_filters.empty(), "model.filters", "needs at least one stage");
  check(c.model_patch >= 1 && c.model_patch % 2 == 1, "model.patch", "must be a positive odd number");
  check(c.train_batch >= 1, "train.batch", "must be >= 1");
  check(c.train_lr > 0.0, "train.lr", "must be positive");
  check(c.train_max_epochs >= 1, "train.max_epochs", "must be >= 1");
  check(c.train_valid_frac > 0.0 && c.train_valid_frac < 1.0, "train.valid_frac", "must lie in (0, 1)");
  check(c.train_tol >= 0.0, "train.tol", "must be non-negative");
  check(c.train_sigma2_0 > 0.0, "train.sigma2_0", "must be positive");
  check(c.enkf_n_members >= 2, "enkf.n_members", "must be >= 2");
  check(c.enkf_taper_c > 0.0, "enkf.taper_c", "must be positive");
  check(c.enkf_jitter >= 0.0, "enkf.jitter", "must be non-negative");
  check(c.obs_sigma2_eps > 0.0, "obs.sigma2_eps", "must be positive");
  check(c.obs_fraction >= 0.0 && c.obs_fraction <= 1.0, "obs.fraction", "must lie in [0, 1]");
  check(c.mask_border >= 0 && 2 * c.mask_border < c.grid_n, "mask.border", "must leave interior pixels");
  check(c.sim_T > c.model_tau, "sim.T", "must exceed model.tau");
  try {
    (void)parse_regime(c.sim_regime);
  } catch (const Error&) {
    check(false, "sim.regime", "must be translating-blobs, advection-diffusion or rotational-flow");
  }
}

}  // namespace

CnnArchitecture RunConfig::architecture() const {
  CnnArchitecture a;
  a.tau = model_tau;
  a.input_side = grid_n;
  a.filters = model_filters;
  a.patch = model_patch;
  a.r = model_r;
  return a;
}

double RunConfig::bandwidth() const { return model_bandwidth > 0.0 ? model_bandwidth : default_bandwidth(model_r); }

TrainingConfig RunConfig::training(int threads) const {
  TrainingConfig t;
  t.batch = train_batch;
  t.lr = train_lr;
  t.max_epochs = train_max_epochs;
  t.valid_frac = train_valid_frac;
  t.tol = train_tol;
  t.seed = seed;
  t.sigma2_0 = train_sigma2_0;
  t.threads = threads;
  return t;
}

SimConfig RunConfig::simulation() const {
  SimConfig s;
  s.n = grid_n;
  s.T = sim_T;
  s.tau = model_tau;
  s.regime = parse_regime(sim_regime);
  s.amplitude = sim_amplitude;
  s.direction = sim_direction_deg * std::numbers::pi / 180.0;
  s.rotation = sim_rotation_deg * std::numbers::pi / 180.0;
  s.diffusion = sim_diffusion;
  s.forcing = {sim_forcing_sigma2, sim_forcing_rho};
  s.n_blobs = sim_n_blobs;
  s.blob_width = sim_blob_width;
  s.periodic = sim_periodic;
  s.seed = seed;
  return s;
}

std::string RunConfig::dump() const {
  std::string s;
  auto line = [&](const char* k, const std::string& v) { s += std::string(k) + " = " + v + "\n"; };
  auto d = [](double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  std::string filters;
  for (std::size_t k = 0; k < model_filters.size(); ++k) filters += (k ? "," : "") + std::to_string(model_filters[k]);
  line("grid.n", std::to_string(grid_n));
  line("model.tau", std::to_string(model_tau));
  line("model.r", std::to_string(model_r));
  line("model.bandwidth", d(model_bandwidth));
  line("model.theta_min", d(model_theta_min));
  line("model.filters", filters);
  line("model.patch", std::to_string(model_patch));
  line("train.batch", std::to_string(train_batch));
  line("train.lr", d(train_lr));
  line("train.max_epochs", std::to_string(train_max_epochs));
  line("train.valid_frac", d(train_valid_frac));
  line("train.tol", d(train_tol));
  line("train.sigma2_0", d(train_sigma2_0));
  line("enkf.n_members", std::to_string(enkf_n_members));
  line("enkf.taper_c", d(enkf_taper_c));
  line("enkf.taper", enkf_taper ? "true" : "false");
  line("enkf.jitter", d(enkf_jitter));
  line("obs.sigma2_eps", d(obs_sigma2_eps));
  line("obs.fraction", d(obs_fraction));
  line("mask.border", std::to_string(mask_border));
  line("sim.T", std::to_string(sim_T));
  line("sim.regime", sim_regime);
  line("sim.amplitude", d(sim_amplitude));
  line("sim.direction_deg", d(sim_direction_deg));
  line("sim.rotation_deg", d(sim_rotation_deg));
  line("sim.diffusion", d(sim_diffusion));
  line("sim.forcing_sigma2", d(sim_forcing_sigma2));
  line("sim.forcing_rho", d(sim_forcing_rho));
  line("sim.n_blobs", std::to_string(sim_n_blobs));
  line("sim.blob_width", d(sim_blob_width));
  line("sim.periodic", sim_periodic ? "true" : "false");
  line("seed", std::to_string(seed));
  return s;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(Errc::ConfigError, where + ": expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) fail(Errc::ConfigError, where + ": unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second)
      fail(Errc::ConfigError, where + ": key '" + std::string(key) + "' given twice");
    if (value.empty()) fail(Errc::ConfigError, where + ": key '" + std::string(key) + "' has no value");
    it->second(c, value, where + " (" + std::string(key) + ")");
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(Errc::ConfigError, "config file: " + std::string(e.what()));
  }
  return parse_run_config(text, path);
}

}  // namespace cnnide
