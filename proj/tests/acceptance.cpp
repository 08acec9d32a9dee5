// Acceptance gates 1-10. Prints one line per criterion; exit status is
// nonzero when any selected criterion fails.
//
//   cnnide_acceptance [--gate N]... [--cli PATH] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cnnide/baseline.hpp"
#include "cnnide/likelihood.hpp"
#include "cnnide/pipeline.hpp"
#include "cnnide/sim.hpp"
#include "gradcheck.hpp"

using namespace cnnide;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::vector<Field> smooth_frames(const GridSpec& g, int T, std::uint64_t seed) {
  const GaussianNoise src = GaussianNoise::matern(g, {1.0, 0.2});
  Rng rng(seed);
  std::vector<Field> frames;
  Eigen::VectorXd y = src.sample(rng);
  for (int t = 0; t < T; ++t) {
    y = 0.8 * y + 0.6 * src.sample(rng);
    frames.push_back(standardize(Field(g, y)).first);
  }
  return frames;
}

// ---- 1: gradients -----------------------------------------------------------

Outcome gate_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec g(8);
  CnnIdeModel model;
  model.basis = build_rbf_basis(g, 4, default_bandwidth(4));
  model.cnn = testing::toy_params(testing::toy_architecture(), 6);
  const SequenceDataset d = make_pairs(smooth_frames(g, 6, 7), 3);
  const GaussianNoise noise = GaussianNoise::matern(g, {0.2, 0.15});
  const std::vector<int> batch = {0, 1};
  const LoglikGrad an = minibatch_grad(d, batch, model, noise, 1);
  auto loss = [&] { return minibatch_grad(d, batch, model, noise, 1).loglik; };
  auto sig = [&] {
    std::vector<int> s;
    for (int i : batch) {
      const auto si = testing::activation_signature(d[i].window, model.cnn);
      s.insert(s.end(), si.begin(), si.end());
    }
    return s;
  };
  const auto rep = testing::check_gradients(model.cnn, an.grad, loss, sig, 1e-5);
  const double secs = seconds_since(t0);
  const bool pass = rep.worst < 1e-4 && rep.checked > 0 && secs < 120.0;
  return {pass, "worst relative error " + fmt(rep.worst) + " at " + rep.worst_at + ", " + std::to_string(rep.checked) +
                    " checked, " + std::to_string(rep.skipped) + " kink-adjacent skipped, " + fmt(secs, 3) + " s"};
}

// ---- 2: kernel mass --------------------------------------------------------

double worst_interior_mass(int n) {
  const GridSpec g(n);
  const TransitionMatrix K = transition_matrix(constant_theta(g, 1e-4, 0.0, 0.0));
  double worst = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const int r = g.row(i), c = g.col(i);
    if (r < 5 || c < 5 || r >= n - 5 || c >= n - 5) continue;
    worst = std::max(worst, std::abs(K.K.row(i).sum() - 1.0));
  }
  return worst;
}

Outcome gate_kernel_mass() {
  const auto t0 = std::chrono::steady_clock::now();
  const double e32 = worst_interior_mass(32), e64 = worst_interior_mass(64);
  const double secs = seconds_since(t0);
  const bool pass = e32 <= 1e-2 && e64 <= 1e-3 && secs < 60.0;
  return {pass, "max |row sum - 1|: n=32 " + fmt(e32) + " (bound 1e-2), n=64 " + fmt(e64) + " (bound 1e-3), " +
                    fmt(secs, 3) + " s"};
}

// ---- 3: unbiased minibatch -------------------------------------------------

Outcome gate_unbiased() {
  const GridSpec g(4);
  CnnIdeModel model;
  model.basis = build_rbf_basis(g, 4, default_bandwidth(4));
  CnnArchitecture a;
  a.input_side = 4;
  a.filters = {2, 3};
  a.patch = 3;
  a.r = 4;
  model.cnn = CnnParams::initialize(a, 4, 0.3);
  set_diffusion_offset(model.cnn, model.basis, default_theta1_init(g));
  const SequenceDataset d = make_pairs(smooth_frames(g, 9, 5), 3);
  const GaussianNoise noise = GaussianNoise::isotropic(g.size(), 0.1);
  const double full = full_loglik(d, model, noise, 1);
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j, ++count) sum += minibatch_grad(d, {i, j}, model, noise, 1).loglik;
  const double rel = std::abs(sum / count - full) / std::abs(full);
  return {d.size() == 6 && count == 15 && rel <= 1e-10,
          "mean over " + std::to_string(count) + " size-2 subsets vs full: relative difference " + fmt(rel)};
}

// ---- 4: EnKF vs Kalman -----------------------------------------------------

Outcome gate_enkf_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec g(8);
  const int m = g.size(), N = 1000, steps = 50;
  const double c = g.cell_width();
  const Eigen::MatrixXd K =
      transition_matrix(constant_theta(g, 0.5 * (0.75 * c) * (0.75 * c), 0.5 * c, -0.25 * c)).K;
  const GaussianNoise q = GaussianNoise::matern(g, {1.0, 0.15});
  const GaussianNoise spread = GaussianNoise::matern(g, {1.0, 0.1});
  const LinearDynamics dyn(K, q);
  Rng frame_rng(77);
  const std::vector<Field> frames = {Field(g, spread.sample(frame_rng)), Field(g, spread.sample(frame_rng))};
  Ensemble ens = init_ensemble(frames, N, 1.0, spread, 2024);
  KalmanState kf{frames[1].values, spread.covariance(), 0};
  Rng truth_rng(99), obs_rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd truth = frames[1].values;
  double mean_err = 0.0, var_err = 0.0;
  for (int t = 1; t <= steps; ++t) {
    truth = K * truth + q.sample(truth_rng);
    Observations o;
    o.t = t;
    o.sigma2_eps = 0.01;
    o.pixels.resize(m);
    o.values.resize(m);
    for (int i = 0; i < m; ++i) {
      o.pixels[i] = i;
      o.values[i] = truth[i] + std::sqrt(o.sigma2_eps) * nd(obs_rng);
    }
    ens = enkf_update(enkf_predict(ens, dyn), o, TaperSpec{0.15, false});
    kf = kalman_update(kalman_predict(kf, K, q.covariance()), o).filtered;
    const Eigen::VectorXd ev = ens.sd().cwiseAbs2(), kv = kf.cov.diagonal();
    mean_err += (ens.mean() - kf.mean).norm() / kf.mean.norm();
    var_err += ((ev - kv).array() / kv.array()).abs().mean();
  }
  mean_err /= steps;
  var_err /= steps;
  const double secs = seconds_since(t0);
  return {mean_err < 0.05 && var_err < 0.15 && secs < 300.0,
          "mean relative error " + fmt(mean_err) + " (bound 0.05), variance relative error " + fmt(var_err) +
              " (bound 0.15), " + fmt(secs, 3) + " s"};
}

// ---- 5: flow recovery ------------------------------------------------------

std::vector<Field> blob_sequence(double amplitude, std::uint64_t seed, double* direction) {
  SimConfig c;
  c.n = 16;
  c.T = 4;
  c.tau = 3;
  c.amplitude = amplitude;
  c.forcing.sigma2 = 0.0;
  c.seed = seed;
  const SimResult s = simulate(c);
  if (direction) *direction = s.direction;
  std::vector<Field> out;
  for (const auto& f : s.frames) out.push_back(standardize(f).first);
  return out;
}

Outcome gate_flow_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridSpec g(16);
  const RunConfig cfg = parse_run_config("");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SequenceDataset train;
  const int n_train = 2000;
  for (int k = 0; k < n_train; ++k) {
    // a fifth of the sequences stand still
    const double amp = u(rng) < 0.2 ? 0.0 : 0.5 + u(rng);
    const auto pairs = make_pairs(blob_sequence(amp, 1000 + k, nullptr), 3);
    train.insert(train.end(), pairs.begin(), pairs.end());
  }
  CnnIdeModel model;
  model.basis = build_rbf_basis(g, cfg.model_r, cfg.bandwidth());
  model.theta_min = cfg.model_theta_min;
  model.cnn = initial_params(cfg.architecture(), model.basis, 7, 0.0, cfg.model_theta_min);
  const TrainResult r = train_cnn(train, model, cfg.training(0));
  model.cnn = r.params;

  int within = 0;
  for (int k = 0; k < 100; ++k) {
    double dir = 0.0;
    const auto f = blob_sequence(1.0, 900000 + k, &dir);
    const FrameWindow w(std::vector<Field>(f.begin(), f.begin() + 3));
    const ThetaFields th = model.theta(w);
    Eigen::Index at = 0;
    w.newest().values.maxCoeff(&at);
    const double ang = std::atan2(th.theta3[at], th.theta2[at]);
    if (std::abs(std::remainder(ang - dir, 2.0 * std::numbers::pi)) <= std::numbers::pi / 4) ++within;
  }
  double m2 = 0.0, m3 = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto f = blob_sequence(0.0, 800000 + k, nullptr);
    const ThetaFields th = model.theta(FrameWindow(std::vector<Field>(f.begin(), f.begin() + 3)));
    m2 += th.theta2.cwiseAbs().mean() / g.cell_width();
    m3 += th.theta3.cwiseAbs().mean() / g.cell_width();
  }
  m2 /= 100;
  m3 /= 100;
  const double secs = seconds_since(t0);
  return {within >= 80 && m2 < 0.1 && m3 < 0.1 && secs < 1800.0,
          std::to_string(within) + "/100 held-out directions within 45 deg, static mean |theta2| " + fmt(m2) +
              " and |theta3| " + fmt(m3) + " cells, " + std::to_string(n_train) + " training sequences, " +
              std::to_string(r.log.size()) + " epochs, " + fmt(secs, 4) + " s"};
}

// ---- 6 and 7: forecast ordering and calibration ----------------------------

struct ForecastRun {
  double cnn = 0, persistence = 0, vanilla = 0, cov90 = 0, seconds = 0;
  std::string note;
};

ForecastRun forecast_experiment(const std::string& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string d = work + "/forecast";
  fs::remove_all(d);
  const RunConfig cfg = parse_run_config("sim.T = 60\nobs.fraction = 0.25\nobs.sigma2_eps = 0.01\n");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> deg(0.0, 360.0);
  std::vector<std::string> files;
  for (int k = 0; k < 30; ++k) {
    RunConfig c = cfg;
    c.seed = 100 + k;
    c.sim_direction_deg = deg(rng);
    const std::string dir = d + "/train" + std::to_string(k);
    pipeline::cmd_simulate(c, dir);
    files.push_back(dir + "/frames.ideq");
  }
  pipeline::cmd_train(cfg, files, d + "/stage1.ckpt", d + "/train_log.csv", false);
  pipeline::cmd_fit_residuals(cfg, d + "/stage1.ckpt", files, d + "/model.ckpt");

  // held-out sequence: 13 steps of filter spin-up, then 15 scored one-step forecasts
  const int first = 13, scored = 15;
  RunConfig test = cfg;
  test.seed = 9001;
  test.sim_direction_deg = deg(rng);
  test.sim_T = first + scored;
  pipeline::cmd_simulate(test, d + "/test");
  pipeline::cmd_filter(test, d + "/model.ckpt", d + "/test/obs.csv", d + "/filter", 0, "");
  pipeline::cmd_baseline(test, d + "/test/obs.csv", d + "/vanilla", first, scored);
  const auto ev = pipeline::cmd_evaluate(test, d + "/test/frames.ideq",
                                         {d + "/filter/forecast", d + "/filter/persistence", d + "/vanilla"},
                                         d + "/eval", "vanilla-ide");
  ForecastRun out;
  for (const auto& p : ev.pooled) {
    if (p.method == "cnn-ide") {
      out.cnn = p.rmspe;
      out.cov90 = p.cov90;
    } else if (p.method == "persistence") {
      out.persistence = p.rmspe;
    } else if (p.method == "vanilla-ide") {
      out.vanilla = p.rmspe;
    }
  }
  out.seconds = seconds_since(t0);
  out.note = std::to_string(ev.per_step.size() / ev.pooled.size()) + " scored steps";
  return out;
}

// ---- 8: scores -------------------------------------------------------------

double crps_by_quadrature(const std::vector<double>& x, double y) {
  std::vector<double> pts = x;
  pts.push_back(y);
  std::sort(pts.begin(), pts.end());
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double a = pts[k], b = pts[k + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    double F = 0.0;
    for (double v : x) F += v <= mid ? 1.0 : 0.0;
    F /= n;
    const double step = mid >= y ? 1.0 : 0.0;
    total += (F - step) * (F - step) * (b - a);
  }
  return total;
}

Outcome gate_scores() {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> size(2, 60);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(size(rng));
    for (double& v : x) v = 2.0 * nd(rng) + 0.5;
    const double y = 2.0 * nd(rng);
    worst = std::max(worst, std::abs(crps_ensemble(x, y) - crps_by_quadrature(x, y)));
  }
  // interval [-1, 1], alpha = 0.1: width plus 20 times the miss distance
  const std::vector<bool> one(1, true);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, -1.0), hi = Eigen::VectorXd::Constant(1, 1.0);
  struct Case {
    double y, is, cov;
  };
  const Case cases[] = {{0.3, 2.0, 1.0}, {-1.5, 12.0, 0.0}, {1.25, 7.0, 0.0}};
  int hand_ok = 0;
  for (const auto& c : cases) {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, c.y);
    if (std::abs(interval_score_90(lo, hi, y, one) - c.is) < 1e-12 && coverage_90(lo, hi, y, one) == c.cov) ++hand_ok;
  }
  return {worst < 1e-6 && hand_ok == 3,
          "CRPS vs quadrature max difference " + fmt(worst) + " over 20 ensembles, " + std::to_string(hand_ok) +
              "/3 interval-score and coverage hand cases"};
}

// ---- 9: residual fit -------------------------------------------------------

Outcome gate_residual_fit() {
  const GridSpec g(16);
  const NoiseParams truth{0.01, 0.04};
  const GaussianNoise src = GaussianNoise::matern(g, truth);
  Rng rng(77);
  std::vector<Eigen::VectorXd> res;
  for (int t = 0; t < 200; ++t) res.push_back(src.sample(rng));
  const ResidualFit fit = fit_residual_matern(g, res);
  const double es = std::abs(fit.params.sigma2 / truth.sigma2 - 1.0), er = std::abs(fit.params.rho / truth.rho - 1.0);
  return {es < 0.2 && er < 0.2,
          "sigma2 " + fmt(fit.params.sigma2) + " (" + fmt(100 * es, 3) + "% off), rho " + fmt(fit.params.rho) + " (" +
              fmt(100 * er, 3) + "% off)"};
}

// ---- 10: CLI determinism ---------------------------------------------------

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " --quiet").c_str());
  return rc;
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
  return out;
}

Outcome gate_determinism(const std::string& cli, const std::string& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string base = work + "/determinism";
  fs::remove_all(base);
  const std::string cfg = base + "/desk.cfg";
  write_file(cfg, "sim.T = 40\ntrain.max_epochs = 3\n");
  for (const char* tag : {"a", "b"}) {
    const std::string d = base + "/" + tag;
    const std::string common = " --config " + cfg + " --seed 17";
    const std::vector<std::string> cmds = {
        "simulate" + common + " --out " + d + "/sim",
        "train" + common + " --data " + d + "/sim/frames.ideq --out " + d + "/stage1.ckpt --log " + d + "/train.csv",
        "fit-residuals" + common + " --checkpoint " + d + "/stage1.ckpt --data " + d + "/sim/frames.ideq --out " + d +
            "/model.ckpt",
        "filter" + common + " --checkpoint " + d + "/model.ckpt --obs " + d + "/sim/obs.csv --out " + d +
            "/filter --steps 12",
        "forecast" + common + " --checkpoint " + d + "/model.ckpt --state " + d + "/filter/state --steps 3 --out " + d +
            "/forecast",
        "baseline" + common + " --obs " + d + "/sim/obs.csv --from 10 --steps 2 --out " + d + "/vanilla",
        "evaluate" + common + " --truth " + d + "/sim/frames.ideq --pred " + d + "/filter/forecast " + d +
            "/filter/persistence " + d + "/vanilla --out " + d + "/eval",
        "extract-flow" + common + " --checkpoint " + d + "/model.ckpt --window " + d + "/sim/frames.ideq --out " + d +
            "/flow.csv",
    };
    for (const auto& c : cmds)
      if (run("\"" + cli + "\" " + c) != 0) return {false, "command failed: " + c};
  }
  const auto a = snapshot(base + "/a"), b = snapshot(base + "/b");
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : a)
    if (!b.count(name) || b.at(name) != bytes) differ.push_back(name);
  if (a.size() != b.size()) differ.push_back("<file set>");
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(a.size()) + " output files, " + std::to_string(differ.size()) + " differ";
  if (!differ.empty()) detail += " (first: " + differ.front() + ")";
  return {differ.empty() && a.size() > 20, detail + ", " + fmt(secs, 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN-IDE acceptance gates"};
  std::vector<int> gates;
  std::string cli = CNNIDE_CLI_PATH;
  std::string work = (fs::temp_directory_path() / "cnnide_acceptance").string();
  app.add_option("--gate", gates, "criteria to run (all when omitted)")->check(CLI::Range(1, 10));
  app.add_option("--cli", cli, "path to the cnnide executable");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (gates.empty())
    for (int k = 1; k <= 10; ++k) gates.push_back(k);
  const std::set<int> want(gates.begin(), gates.end());
  fs::create_directories(work);

  bool all = true;
  auto report = [&](int k, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << k << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << ": " << o.detail
              << std::endl;
    all = all && o.pass;
  };
  auto guarded = [&](int k, const std::string& name, const std::function<Outcome()>& fn) {
    if (!want.count(k)) return;
    try {
      report(k, name, fn());
    } catch (const std::exception& e) {
      report(k, name, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, "gradient", gate_gradients);
  guarded(2, "kernel mass", gate_kernel_mass);
  guarded(3, "unbiasedness", gate_unbiased);
  guarded(4, "EnKF oracle", gate_enkf_oracle);
  guarded(5, "flow recovery", gate_flow_recovery);
  if (want.count(6) || want.count(7)) {
    ForecastRun fr;
    std::string err;
    try {
      fr = forecast_experiment(work);
    } catch (const std::exception& e) {
      err = e.what();
    }
    const std::string common = err.empty() ? ", " + fr.note + ", " + fmt(fr.seconds, 4) + " s" : "";
    guarded(6, "forecast ordering", [&]() -> Outcome {
      if (!err.empty()) return {false, "error: " + err};
      const bool pass = fr.cnn < fr.persistence && fr.cnn <= 1.3 * fr.vanilla && fr.seconds < 900.0;
      return {pass, "RMSPE cnn-ide " + fmt(fr.cnn) + ", persistence " + fmt(fr.persistence) + ", vanilla-ide " +
                        fmt(fr.vanilla) + " (ratio " + fmt(fr.cnn / fr.vanilla) + ", bound 1.3)" + common};
    });
    guarded(7, "calibration", [&]() -> Outcome {
      if (!err.empty()) return {false, "error: " + err};
      return {fr.cov90 >= 0.80 && fr.cov90 <= 0.97, "Cov90 of the cnn-ide forecast ensemble " + fmt(fr.cov90) +
                                                        " (band [0.80, 0.97])" + common};
    });
  }
  guarded(8, "score oracles", gate_scores);
  guarded(9, "residual fit", gate_residual_fit);
  guarded(10, "determinism", [&] { return gate_determinism(cli, work); });
  return all ? 0 : 1;
}
