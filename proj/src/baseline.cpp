#include "cnnide/baseline.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace cnnide {

KalmanState kalman_predict(const KalmanState& s, const Eigen::MatrixXd& K, const Eigen::MatrixXd& Q) {
  require(K.rows() == s.mean.size() && K.cols() == s.mean.size() && Q.rows() == K.rows(),
          Errc::DimensionMismatch, "kalman_predict: dimensions differ");
  KalmanState out;
  out.t = s.t + 1;
  out.mean = K * s.mean;
  out.cov = K * s.cov * K.transpose() + Q;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

KalmanStepResult kalman_update(const KalmanState& s, const Observations& obs) {
  const auto m = s.mean.size();
  require(static_cast<Eigen::Index>(obs.pixels.size()) == obs.values.size(), Errc::DimensionMismatch,
          "observation pixels and values differ in length");
  KalmanStepResult r;
  r.filtered = s;
  r.filtered.t = obs.t;
  const int p = obs.size();
  if (p == 0) return r;
  for (int k : obs.pixels) require(k >= 0 && k < m, Errc::InvalidArgument, "observation pixel outside state");

  Eigen::MatrixXd PHt(m, p);
  for (int k = 0; k < p; ++k) PHt.col(k) = s.cov.col(obs.pixels[k]);
  Eigen::MatrixXd S(p, p);
  r.innovation.resize(p);
  for (int k = 0; k < p; ++k) {
    r.innovation[k] = obs.values[k] - s.mean[obs.pixels[k]];
    for (int l = 0; l < p; ++l) S(k, l) = PHt(obs.pixels[k], l);
  }
  S.diagonal().array() += obs.sigma2_eps;
  r.innovation_cov = S;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    fail(Errc::SingularInnovation, "innovation covariance is singular at t=" + std::to_string(obs.t));
  }
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(r.innovation);
  r.loglik = -0.5 * p * std::log(2.0 * std::numbers::pi) - L.diagonal().array().log().sum() - 0.5 * w.squaredNorm();

  const Eigen::MatrixXd gain_t = llt.solve(PHt.transpose());  // S^{-1} H P
  r.filtered.mean += gain_t.transpose() * r.innovation;
  r.filtered.cov -= PHt * gain_t;
  r.filtered.cov = 0.5 * (r.filtered.cov + r.filtered.cov.transpose()).eval();
  return r;
}

KalmanRun kalman_filter(const KalmanState& prior, const std::vector<Observations>& obs, const Eigen::MatrixXd& K,
                        const Eigen::MatrixXd& Q) {
  KalmanRun run;
  KalmanState cur = prior;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (k > 0) cur = kalman_predict(cur, K, Q);
    cur.t = obs[k].t;
    run.predicted.push_back(cur);
    KalmanStepResult u = kalman_update(cur, obs[k]);
    run.loglik += u.loglik;
    run.innovations.push_back(std::move(u.innovation));
    run.innovation_covs.push_back(std::move(u.innovation_cov));
    cur = std::move(u.filtered);
    run.filtered.push_back(cur);
  }
  return run;
}

Eigen::MatrixXd vanilla_transition(const GridSpec& grid, const VanillaIdeParams& p) {
  return transition_matrix(constant_theta(grid, p.d, p.v1, p.v2)).K;
}

namespace {

KalmanState window_prior(const GridSpec& grid, const std::vector<Observations>& window, const WindowFitConfig& cfg) {
  KalmanState prior;
  prior.mean = Eigen::VectorXd::Zero(grid.size());
  prior.cov = noise_covariance(grid, {1.0, cfg.prior_rho}).sigma;
  prior.t = window.empty() ? 0 : window.front().t;
  return prior;
}

double loglik_from(const GridSpec& grid, const std::vector<Observations>& window, const VanillaIdeParams& p,
                   const KalmanState& prior, KalmanState* last) {
  require(p.d > 0.0 && p.sigma2_v > 0.0, Errc::InvalidArgument, "vanilla IDE needs d > 0 and sigma2_v > 0");
  const int m = grid.size();
  const Eigen::MatrixXd K = vanilla_transition(grid, p);
  const Eigen::MatrixXd Q = p.sigma2_v * Eigen::MatrixXd::Identity(m, m);
  KalmanRun run = kalman_filter(prior, window, K, Q);
  if (last) *last = run.filtered.back();
  return run.loglik;
}

}  // namespace

double window_loglik(const GridSpec& grid, const std::vector<Observations>& window, const VanillaIdeParams& p,
                     const WindowFitConfig& cfg, KalmanState* last) {
  return loglik_from(grid, window, p, window_prior(grid, window, cfg), last);
}

namespace {

struct Bounds {
  const WindowFitConfig* cfg;
  VanillaIdeParams decode(const gsl_vector* x) const {
    VanillaIdeParams p;
    p.d = std::exp(gsl_vector_get(x, 0));
    p.v1 = gsl_vector_get(x, 1);
    p.v2 = gsl_vector_get(x, 2);
    p.sigma2_v = std::exp(gsl_vector_get(x, 3));
    return p;
  }
  // distance outside the box, 0 when inside
  double excess(const VanillaIdeParams& p) const {
    auto out = [](double v, double lo, double hi) { return v < lo ? lo - v : v > hi ? v - hi : 0.0; };
    return out(std::log(p.d), std::log(cfg->d_min), std::log(cfg->d_max)) +
           out(p.v1, -cfg->v_max, cfg->v_max) + out(p.v2, -cfg->v_max, cfg->v_max) +
           out(std::log(p.sigma2_v), std::log(cfg->sigma2_min), std::log(cfg->sigma2_max));
  }
};

struct ObjectiveData {
  const GridSpec* grid;
  const std::vector<Observations>* window;
  Bounds bounds;
  KalmanState prior;
};

constexpr double kPenalty = 1e12;

double objective(const gsl_vector* x, void* raw) {
  auto* data = static_cast<ObjectiveData*>(raw);
  const VanillaIdeParams p = data->bounds.decode(x);
  const double ex = data->bounds.excess(p);
  if (ex > 0.0) return kPenalty * (1.0 + ex);
  try {
    const double ll = loglik_from(*data->grid, *data->window, p, data->prior, nullptr);
    return std::isfinite(ll) ? -ll : kPenalty;
  } catch (const Error&) {
    return kPenalty;
  }
}

}  // namespace

WindowFit fit_window_ide(const GridSpec& grid, const std::vector<Observations>& window, const WindowFitConfig& cfg) {
  require(window.size() == 3, Errc::InvalidArgument, "window fit needs exactly 3 time steps");
  gsl_set_error_handler_off();
  const double c = grid.cell_width();
  WindowFit fit;
  fit.starts = {{0.5 * c * c, 0.0, 0.0, 0.05},
                {2.0 * c * c, 0.0, 0.0, 0.05},
                {c * c, c, c, 0.05},
                {c * c, -c, -c, 0.05}};

  ObjectiveData data{&grid, &window, Bounds{&cfg}, window_prior(grid, window, cfg)};
  gsl_multimin_function fn{&objective, 4, &data};
  double best = std::numeric_limits<double>::infinity();
  VanillaIdeParams best_p;
  for (const auto& s : fit.starts) {
    gsl_vector* x = gsl_vector_alloc(4);
    gsl_vector* step = gsl_vector_alloc(4);
    gsl_vector_set(x, 0, std::log(s.d));
    gsl_vector_set(x, 1, s.v1);
    gsl_vector_set(x, 2, s.v2);
    gsl_vector_set(x, 3, std::log(s.sigma2_v));
    gsl_vector_set(step, 0, 0.7);
    gsl_vector_set(step, 1, 0.5 * c);
    gsl_vector_set(step, 2, 0.5 * c);
    gsl_vector_set(step, 3, 0.7);
    const double f0 = objective(x, &data);
    fit.start_loglik.push_back(f0 >= kPenalty ? -std::numeric_limits<double>::infinity() : -f0);

    gsl_multimin_fminimizer* mm = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 4);
    gsl_multimin_fminimizer_set(mm, &fn, x, step);
    for (int it = 0; it < cfg.max_iter; ++it) {
      if (gsl_multimin_fminimizer_iterate(mm) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(mm), cfg.simplex_tol) == GSL_SUCCESS) break;
    }
    const double fval = gsl_multimin_fminimizer_minimum(mm);
    if (fval < best) {
      best = fval;
      best_p = data.bounds.decode(gsl_multimin_fminimizer_x(mm));
    }
    gsl_multimin_fminimizer_free(mm);
    gsl_vector_free(step);
    gsl_vector_free(x);
  }
  if (!(best < kPenalty)) fail(Errc::OptimizerFailure, "no start produced a finite window likelihood");
  fit.params = best_p;
  fit.loglik = loglik_from(grid, window, best_p, data.prior, &fit.filtered);
  return fit;
}

GaussianForecast vanilla_ide_forecast(const GridSpec& grid, const VanillaIdeParams& p, const KalmanState& filtered) {
  const Eigen::MatrixXd K = vanilla_transition(grid, p);
  GaussianForecast f;
  f.mean = K * filtered.mean;
  f.var = (K * filtered.cov).cwiseProduct(K).rowwise().sum().array() + p.sigma2_v;
  return f;
}

Field persistence_forecast(const Field& prediction) { return prediction; }

Eigen::MatrixXd gaussian_members(const GaussianForecast& f, int n_members, std::uint64_t seed) {
  require(n_members >= 2, Errc::InvalidArgument, "need at least 2 members");
  Rng rng(seed);
  Eigen::MatrixXd X(f.mean.size(), n_members);
  const Eigen::VectorXd sd = f.var.cwiseMax(0.0).cwiseSqrt();
  for (int j = 0; j < n_members; ++j) X.col(j) = f.mean + sd.cwiseProduct(standard_normal(f.mean.size(), rng));
  return X;
}

}  // namespace cnnide
