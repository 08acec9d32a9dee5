#include "cnnide/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <ostream>
#include <set>

#include "cnnide/baseline.hpp"
#include "cnnide/parallel.hpp"
#include "json.hpp"

namespace cnnide::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const CommonOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << '\n';
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string step_name(const char* prefix, int t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_t%06d.ideq", prefix, t);
  return buf;
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<Field> load_frames(const std::string& path) { return read_sequence(path).frames; }

Eigen::MatrixXd as_matrix(const std::vector<Field>& cols) {
  Eigen::MatrixXd X(cols.front().grid.size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) X.col(static_cast<Eigen::Index>(j)) = cols[j].values;
  return X;
}

std::vector<Field> as_fields(const GridSpec& g, const Eigen::MatrixXd& X) {
  std::vector<Field> out;
  for (Eigen::Index j = 0; j < X.cols(); ++j) out.emplace_back(g, X.col(j));
  return out;
}

void check_grid(const RunConfig& cfg, const GridSpec& g, const std::string& what) {
  if (g.n() != cfg.grid_n)
    fail(Errc::ConfigError, what + " has n=" + std::to_string(g.n()) + " but grid.n = " + std::to_string(cfg.grid_n));
}

GaussianNoise forcing_of(const Checkpoint& ck, const RunConfig& cfg) {
  const GridSpec g(ck.grid_n);
  if (ck.noise_fitted) return GaussianNoise::matern(g, ck.noise);
  return GaussianNoise::isotropic(g.size(), cfg.train_sigma2_0);
}

// per-pixel summary frames of an ensemble matrix
struct Summary {
  Field mean, sd, q05, q95;
};

Summary summarize(const GridSpec& g, const Eigen::MatrixXd& X) {
  Summary s{Field(g), Field(g), Field(g), Field(g)};
  const double N = static_cast<double>(X.cols());
  std::vector<double> row(static_cast<std::size_t>(X.cols()));
  for (int i = 0; i < g.size(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
    const double mu = X.row(i).mean();
    s.mean.values[i] = mu;
    s.sd.values[i] = std::sqrt((X.row(i).array() - mu).square().sum() / std::max(1.0, N - 1.0));
    s.q05.values[i] = quantile(row, 0.05);
    s.q95.values[i] = quantile(row, 0.95);
  }
  return s;
}

struct SummaryFiles {
  std::vector<Field> mean, sd, q05, q95;
  std::vector<int> t;
  void add(int time, const Summary& s) {
    t.push_back(time);
    mean.push_back(s.mean);
    sd.push_back(s.sd);
    q05.push_back(s.q05);
    q95.push_back(s.q95);
  }
  void write(const std::string& dir) const {
    if (t.empty()) return;
    write_sequence(join(dir, "mean.ideq"), plain_sequence(mean));
    write_sequence(join(dir, "sd.ideq"), plain_sequence(sd));
    write_sequence(join(dir, "q05.ideq"), plain_sequence(q05));
    write_sequence(join(dir, "q95.ideq"), plain_sequence(q95));
    std::string csv = "index,t\n";
    for (std::size_t k = 0; k < t.size(); ++k) csv += std::to_string(k) + "," + std::to_string(t[k]) + "\n";
    write_file(join(dir, "steps.csv"), csv);
  }
};

}  // namespace

// ---- prediction directories ----------------------------------------------

void write_manifest(const std::string& dir, const PredictionSet& set) {
  nlohmann::ordered_json j;
  j["method"] = set.method;
  j["steps"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < set.t.size(); ++k)
    j["steps"].push_back({{"t", set.t[k]}, {"members", set.member_files[k]}});
  write_file(join(dir, "manifest.json"), j.dump(2) + "\n");
}

PredictionSet read_manifest(const std::string& dir) {
  const std::string path = join(dir, "manifest.json");
  PredictionSet set;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    set.method = j.at("method").get<std::string>();
    for (const auto& s : j.at("steps")) {
      set.t.push_back(s.at("t").get<int>());
      set.member_files.push_back(s.at("members").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::FileError, path + ": " + e.what());
  }
  return set;
}

void add_prediction(const std::string& dir, PredictionSet& set, int t, const Eigen::MatrixXd& members) {
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(members.rows()))));
  const GridSpec g(n);
  const std::string name = step_name("members", t);
  write_sequence(join(dir, name), plain_sequence(as_fields(g, members), 64));
  set.t.push_back(t);
  set.member_files.push_back(name);
}

// ---- simulate -------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, const std::string& out_dir, const CommonOptions& opt) {
  const SimConfig sc = cfg.simulation();
  const SimResult sim = simulate(sc);
  const GridSpec g(cfg.grid_n);
  SequenceData seq;
  seq.grid = g;
  for (const auto& f : sim.frames) {
    auto [z, rec] = standardize(f);
    seq.frames.push_back(std::move(z));
    seq.records.push_back(rec);
  }
  write_sequence(join(out_dir, "frames.ideq"), seq);
  write_sequence(join(out_dir, "flow_x.ideq"), plain_sequence(as_fields(g, [&] {
                   Eigen::MatrixXd X(g.size(), static_cast<Eigen::Index>(sim.flow_x.size()));
                   for (std::size_t t = 0; t < sim.flow_x.size(); ++t) X.col(static_cast<Eigen::Index>(t)) = sim.flow_x[t];
                   return X;
                 }())));
  write_sequence(join(out_dir, "flow_y.ideq"), plain_sequence(as_fields(g, [&] {
                   Eigen::MatrixXd X(g.size(), static_cast<Eigen::Index>(sim.flow_y.size()));
                   for (std::size_t t = 0; t < sim.flow_y.size(); ++t) X.col(static_cast<Eigen::Index>(t)) = sim.flow_y[t];
                   return X;
                 }())));
  // observations are drawn from the standardized frames, the model's working units
  const int per_step = static_cast<int>(std::lround(cfg.obs_fraction * g.size()));
  const auto obs = sample_observations(seq.frames, per_step, cfg.obs_sigma2_eps, derive_seed(cfg.seed, 0x6f6273ULL));
  write_file(join(out_dir, "obs.csv"), observations_csv(obs, g));
  write_file(join(out_dir, "run.cfg"), cfg.dump());
  say(opt, "simulate: " + std::to_string(sc.T) + " frames of " + regime_name(sc.regime) + " on " +
               std::to_string(g.n()) + "x" + std::to_string(g.n()) + ", " + std::to_string(per_step) +
               " observed pixels per step -> " + out_dir);
}

// ---- train / fit-residuals -----------------------------------------------

namespace {

SequenceDataset load_dataset(const RunConfig& cfg, const std::vector<std::string>& data) {
  if (data.empty()) fail(Errc::ConfigError, "no training data given");
  SequenceDataset all;
  for (std::size_t z = 0; z < data.size(); ++z) {
    const SequenceData d = read_sequence(data[z]);
    check_grid(cfg, d.grid, data[z]);
    auto pairs = make_pairs(d.frames, cfg.model_tau, static_cast<int>(z));
    all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return all;
}

}  // namespace

TrainOutputs cmd_train(const RunConfig& cfg, const std::vector<std::string>& data, const std::string& checkpoint_out,
                       const std::string& log_out, bool log_wall_time, const CommonOptions& opt) {
  const SequenceDataset ds = load_dataset(cfg, data);
  const GridSpec g(cfg.grid_n);
  CnnIdeModel model;
  model.basis = build_rbf_basis(g, cfg.model_r, cfg.bandwidth());
  model.theta_min = cfg.model_theta_min;
  model.cnn = initial_params(cfg.architecture(), model.basis, cfg.seed, 0.0, cfg.model_theta_min);
  say(opt, "train: " + std::to_string(ds.size()) + " pairs, " + std::to_string(model.cnn.parameter_count()) +
               " parameters");
  TrainingConfig tc = cfg.training(opt.threads);
  TrainOutputs out;
  out.result = train_cnn(ds, model, tc);
  for (const auto& e : out.result.log)
    say(opt, "  epoch " + std::to_string(e.epoch) + " train " + num(e.train_loglik) + " valid " + num(e.valid_loglik));
  Checkpoint& ck = out.checkpoint;
  ck.params = out.result.params;
  ck.grid_n = cfg.grid_n;
  ck.bandwidth = cfg.bandwidth();
  ck.theta_min = cfg.model_theta_min;
  ck.noise = {cfg.train_sigma2_0, 0.0};
  ck.noise_fitted = false;
  ck.training_echo = cfg.dump();
  write_checkpoint(checkpoint_out, ck);
  if (!log_out.empty()) write_file(log_out, training_log_csv(out.result.log, log_wall_time));
  return out;
}

ResidualFit cmd_fit_residuals(const RunConfig& cfg, const std::string& checkpoint_in,
                              const std::vector<std::string>& data, const std::string& checkpoint_out,
                              const CommonOptions& opt) {
  Checkpoint ck = read_checkpoint(checkpoint_in);
  check_grid(cfg, GridSpec(ck.grid_n), checkpoint_in);
  const SequenceDataset ds = load_dataset(cfg, data);
  const auto res = residuals(ds, ck.model(), opt.threads);
  const ResidualFit fit = fit_residual_matern(GridSpec(ck.grid_n), res);
  ck.noise = fit.params;
  ck.noise_fitted = true;
  write_checkpoint(checkpoint_out, ck);
  say(opt, "fit-residuals: sigma2 = " + num(fit.params.sigma2) + ", rho = " + num(fit.params.rho) +
               (fit.rho_at_lower_bound ? " (rho at lower bound)" : "") +
               (fit.sigma2_clamped ? " (sigma2 clamped)" : ""));
  return fit;
}

// ---- filter / forecast ----------------------------------------------------

void cmd_filter(const RunConfig& cfg, const std::string& checkpoint, const std::string& obs_csv,
                const std::string& out_dir, int steps, const std::string& init, const CommonOptions& opt) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const GridSpec g(ck.grid_n);
  check_grid(cfg, g, checkpoint);
  const int tau = ck.params.arch().tau;
  const auto obs = parse_observations_csv(read_file(obs_csv), g, cfg.obs_sigma2_eps, obs_csv);
  std::map<int, const Observations*> by_t;
  for (const auto& o : obs) by_t[o.t] = &o;
  if (by_t.empty()) fail(Errc::FileError, obs_csv + ": no observations");

  std::vector<Field> frames(tau, Field(g));
  if (!init.empty()) {
    const auto f = load_frames(init);
    if (static_cast<int>(f.size()) < tau) fail(Errc::FileError, init + ": fewer than tau frames");
    frames.assign(f.begin(), f.begin() + tau);
  }
  const GaussianNoise spread = GaussianNoise::matern(g, {1.0, ck.noise_fitted ? std::max(ck.noise.rho, 0.05) : 0.1});
  const int t0 = tau - 1;
  int t_end = by_t.rbegin()->first;
  if (steps > 0) t_end = std::min(t_end, t0 + steps - 1);

  const CnnDynamics dyn(ck.model(), forcing_of(ck, cfg));
  const TaperSpec taper{cfg.enkf_taper_c, cfg.enkf_taper};
  Ensemble ens = init_ensemble(frames, cfg.enkf_n_members, cfg.enkf_jitter, spread, cfg.seed, t0);

  const std::string fdir = join(out_dir, "forecast"), pdir = join(out_dir, "persistence");
  PredictionSet fset{"cnn-ide", {}, {}}, pset{"persistence", {}, {}};
  SummaryFiles filtered;
  std::vector<DynamicsSummary> dyn_rows;
  for (int t = t0; t <= t_end; ++t) {
    if (t > t0) {
      // persistence forecast for t: the filtered members at t - 1
      add_prediction(pdir, pset, t, ens.newest_matrix());
      ens = enkf_predict(ens, dyn, opt.threads);
      add_prediction(fdir, fset, t, ens.newest_matrix());
    }
    if (const auto it = by_t.find(t); it != by_t.end()) ens = enkf_update(ens, *it->second, taper);
    filtered.add(t, summarize(g, ens.newest_matrix()));
    dyn_rows.push_back(dynamics_summary(ens, *dyn.cnn_model(), false, opt.threads));
  }
  write_manifest(fdir, fset);
  write_manifest(pdir, pset);
  filtered.write(join(out_dir, "filtered"));
  write_file(join(out_dir, "dynamics.csv"), dynamics_csv(dyn_rows, g));
  write_ensemble(join(out_dir, "state"), ens);
  say(opt, "filter: assimilated t = " + std::to_string(t0) + ".." + std::to_string(t_end) + " with " +
               std::to_string(ens.size()) + " members -> " + out_dir);
}

void cmd_forecast(const RunConfig& cfg, const std::string& checkpoint, const std::string& state_stem, int h,
                  const std::string& out_dir, const CommonOptions& opt) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const GridSpec g(ck.grid_n);
  check_grid(cfg, g, checkpoint);
  const Ensemble ens = read_ensemble(state_stem);
  if (ens.grid().n() != g.n() || ens.tau() != ck.params.arch().tau)
    fail(Errc::ShapeMismatchOnLoad, state_stem + ": state does not match the checkpoint");
  const CnnDynamics dyn(ck.model(), forcing_of(ck, cfg));
  const ForecastResult fr = forecast(ens, dyn, h, opt.threads);
  PredictionSet set{"cnn-ide", {}, {}};
  SummaryFiles sum;
  for (const auto& e : fr.ensembles) {
    add_prediction(out_dir, set, e.t, e.newest_matrix());
    sum.add(e.t, summarize(g, e.newest_matrix()));
  }
  write_manifest(out_dir, set);
  sum.write(out_dir);
  write_file(join(out_dir, "dynamics.csv"), dynamics_csv(fr.summaries, g));
  say(opt, "forecast: " + std::to_string(h) + " steps from t = " + std::to_string(ens.t) + " -> " + out_dir);
}

// ---- baseline -------------------------------------------------------------

void cmd_baseline(const RunConfig& cfg, const std::string& obs_csv, const std::string& out_dir, int first, int steps,
                  const CommonOptions& opt) {
  const GridSpec g(cfg.grid_n);
  const auto obs = parse_observations_csv(read_file(obs_csv), g, cfg.obs_sigma2_eps, obs_csv);
  std::map<int, Observations> by_t;
  for (const auto& o : obs) by_t[o.t] = o;
  if (by_t.empty()) fail(Errc::FileError, obs_csv + ": no observations");
  const int t0 = std::max(first > 0 ? first : cfg.model_tau, 3);
  int t_end = by_t.rbegin()->first;
  if (steps > 0) t_end = std::min(t_end, t0 + steps - 1);
  auto at = [&](int t) {
    if (auto it = by_t.find(t); it != by_t.end()) return it->second;
    Observations empty;
    empty.t = t;
    empty.sigma2_eps = cfg.obs_sigma2_eps;
    return empty;
  };
  // independent windows, fitted in parallel and written in time order
  std::vector<int> targets;
  for (int t = t0; t <= t_end; ++t) targets.push_back(t);
  std::vector<GaussianForecast> fc(targets.size());
  std::vector<VanillaIdeParams> params(targets.size());
  parallel_for(static_cast<int>(targets.size()), opt.threads, [&](int k) {
    const int t = targets[k];
    const WindowFit fit = fit_window_ide(g, {at(t - 3), at(t - 2), at(t - 1)});
    params[k] = fit.params;
    fc[k] = vanilla_ide_forecast(g, fit.params, fit.filtered);
  });
  PredictionSet set{"vanilla-ide", {}, {}};
  std::string csv = "t,d,v1,v2,sigma2_v\n";
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const int t = targets[k];
    add_prediction(out_dir, set, t, gaussian_members(fc[k], cfg.enkf_n_members, derive_seed(cfg.seed, 0x76616eULL, t)));
    csv += std::to_string(t) + "," + num(params[k].d) + "," + num(params[k].v1) + "," + num(params[k].v2) + "," +
           num(params[k].sigma2_v) + "\n";
  }
  write_manifest(out_dir, set);
  write_file(join(out_dir, "window_params.csv"), csv);
  say(opt, "baseline: " + std::to_string(targets.size()) + " window fits -> " + out_dir);
}

// ---- evaluate -------------------------------------------------------------

EvaluateOutputs cmd_evaluate(const RunConfig& cfg, const std::string& truth, const std::vector<std::string>& pred_dirs,
                             const std::string& out_dir, const std::string& reference, const CommonOptions& opt) {
  if (pred_dirs.empty()) fail(Errc::ConfigError, "no prediction directories given");
  const SequenceData td = read_sequence(truth);
  check_grid(cfg, td.grid, truth);
  const auto mask = interior_mask(td.grid, cfg.mask_border);

  std::vector<PredictionSet> sets;
  for (const auto& d : pred_dirs) sets.push_back(read_manifest(d));
  std::set<int> common;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::set<int> mine;
    for (int t : sets[k].t)
      if (t >= 0 && t < static_cast<int>(td.frames.size())) mine.insert(t);
    if (k == 0) {
      common = mine;
    } else {
      std::set<int> both;
      std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(), std::inserter(both, both.end()));
      common = both;
    }
  }
  if (common.empty()) fail(Errc::MismatchedCoverage, "prediction sets share no time with each other and the truth");

  EvaluateOutputs out;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::vector<ScoreReport> steps;
    for (std::size_t s = 0; s < sets[k].t.size(); ++s) {
      const int t = sets[k].t[s];
      if (!common.count(t)) continue;
      const SequenceData md = read_sequence(join(pred_dirs[k], sets[k].member_files[s]));
      if (!(md.grid == td.grid)) fail(Errc::ShapeMismatchOnLoad, pred_dirs[k] + ": grid differs from truth");
      steps.push_back(score_ensemble(sets[k].method, 0, t, as_matrix(md.frames), td.frames[t].values, mask));
    }
    out.per_step.insert(out.per_step.end(), steps.begin(), steps.end());
    out.pooled.push_back(aggregate(steps));
  }
  std::size_t ref = 0;
  if (!reference.empty()) {
    const auto it = std::find_if(out.pooled.begin(), out.pooled.end(), [&](const ScoreReport& r) { return r.method == reference; });
    if (it == out.pooled.end()) fail(Errc::ConfigError, "reference method '" + reference + "' not among the predictions");
    ref = static_cast<std::size_t>(it - out.pooled.begin());
  }
  out.ratios = score_ratio_table(out.pooled, out.pooled[ref]);

  std::vector<ScoreReport> all = out.per_step;
  all.insert(all.end(), out.pooled.begin(), out.pooled.end());
  write_file(join(out_dir, "scores.csv"), reports_csv(all));
  write_file(join(out_dir, "ratios.csv"), ratios_csv(out.ratios));
  for (const auto& p : out.pooled)
    say(opt, "evaluate: " + p.method + " rmspe " + num(p.rmspe) + " crps " + num(p.crps) + " is90 " + num(p.is90) +
                 " cov90 " + num(p.cov90) + " over " + std::to_string(common.size()) + " steps");
  return out;
}

// ---- extract-flow ---------------------------------------------------------

std::string cmd_extract_flow(const RunConfig& cfg, const std::string& checkpoint, const std::string& window_file,
                             const std::string& out_csv, const CommonOptions& opt) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const GridSpec g(ck.grid_n);
  check_grid(cfg, g, checkpoint);
  const int tau = ck.params.arch().tau;
  const auto frames = load_frames(window_file);
  if (static_cast<int>(frames.size()) < tau) fail(Errc::InsufficientFrames, window_file + ": fewer than tau frames");
  const FrameWindow w(std::vector<Field>(frames.end() - tau, frames.end()));
  const CnnIdeModel model = ck.model();
  const ThetaFields th = model.theta(w);
  std::string csv = "pixel_row,pixel_col,theta1,theta2,theta3,dx_cells,dy_cells,angle_deg,magnitude_cells\n";
  for (int i = 0; i < g.size(); ++i) {
    const double dx = th.theta2[i] * g.n(), dy = th.theta3[i] * g.n();
    double ang = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
    if (ang < 0) ang += 360.0;
    csv += std::to_string(g.row(i)) + "," + std::to_string(g.col(i)) + "," + num(th.theta1[i]) + "," +
           num(th.theta2[i]) + "," + num(th.theta3[i]) + "," + num(dx) + "," + num(dy) + "," + num(ang) + "," +
           num(std::hypot(dx, dy)) + "\n";
  }
  if (!out_csv.empty()) write_file(out_csv, csv);
  say(opt, "extract-flow: " + std::to_string(g.size()) + " pixels -> " + (out_csv.empty() ? "-" : out_csv));
  return csv;
}

}  // namespace cnnide::pipeline
