#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cnnide/enkf.hpp"

namespace cnnide {

/// Spatially invariant IDE: diffusion d, advection (v1, v2), process noise sigma2_v I.
struct VanillaIdeParams {
  double d = 1e-3;
  double v1 = 0.0;
  double v2 = 0.0;
  double sigma2_v = 0.05;
};

struct KalmanState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int t = 0;
};

/// mean -> K mean, cov -> K cov K^T + Q (symmetrised).
KalmanState kalman_predict(const KalmanState& s, const Eigen::MatrixXd& K, const Eigen::MatrixXd& Q);

struct KalmanStepResult {
  KalmanState filtered;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd innovation_cov;
  double loglik = 0.0;  // log N(innovation; 0, innovation_cov); 0 with no data
};

/// Joint update against every observed pixel of one step.
KalmanStepResult kalman_update(const KalmanState& s, const Observations& obs);

struct KalmanRun {
  std::vector<KalmanState> predicted;  // prior for each observation step
  std::vector<KalmanState> filtered;
  std::vector<Eigen::VectorXd> innovations;
  std::vector<Eigen::MatrixXd> innovation_covs;
  double loglik = 0.0;
};

/// `prior` is the predictive distribution at the time of obs[0]; each later
/// step is predicted with (K, Q) and then updated.
KalmanRun kalman_filter(const KalmanState& prior, const std::vector<Observations>& obs,
                        const Eigen::MatrixXd& K, const Eigen::MatrixXd& Q);

Eigen::MatrixXd vanilla_transition(const GridSpec& grid, const VanillaIdeParams& p);

struct WindowFitConfig {
  double prior_rho = 0.1;   // Matern-3/2 prior covariance at the first window frame, unit variance
  int max_iter = 400;
  double simplex_tol = 1e-4;
  double d_min = 1e-6, d_max = 0.05;
  double v_max = 0.25;
  double sigma2_min = 1e-6, sigma2_max = 10.0;
};

struct WindowFit {
  VanillaIdeParams params;
  double loglik = 0.0;
  std::vector<VanillaIdeParams> starts;
  std::vector<double> start_loglik;
  KalmanState filtered;  // at the last window step
};

/// Innovations log-likelihood of the window under `p` (prior N(0, P0) at obs[0]).
double window_loglik(const GridSpec& grid, const std::vector<Observations>& window, const VanillaIdeParams& p,
                     const WindowFitConfig& cfg = {}, KalmanState* last = nullptr);

/// Maximum-likelihood (d, v1, v2, sigma2_v) for the window t-2..t.
WindowFit fit_window_ide(const GridSpec& grid, const std::vector<Observations>& window,
                         const WindowFitConfig& cfg = {});

struct GaussianForecast {
  Eigen::VectorXd mean, var;
};

/// One-step forecast from the filtered state: K m and diag(K P K^T + sigma2_v I).
GaussianForecast vanilla_ide_forecast(const GridSpec& grid, const VanillaIdeParams& p, const KalmanState& filtered);

/// Naive persistence: the prediction at t is the forecast for t + 1.
Field persistence_forecast(const Field& prediction);

/// Independent Gaussian draws per pixel so Gaussian forecasts share the ensemble scoring path.
Eigen::MatrixXd gaussian_members(const GaussianForecast& f, int n_members, std::uint64_t seed);

}  // namespace cnnide
