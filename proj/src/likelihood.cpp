#include "cnnide/likelihood.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cnnide {

SequenceDataset make_pairs(const std::vector<Field>& frames, int tau, int zone) {
  require(tau >= 2, Errc::InvalidArgument, "tau must be >= 2");
  SequenceDataset out;
  const int T = static_cast<int>(frames.size());
  for (int t = tau - 1; t + 1 < T; ++t) {
    std::vector<Field> win(frames.begin() + (t - tau + 1), frames.begin() + t + 1);
    out.push_back({FrameWindow(std::move(win)), frames[t + 1], zone, t});
  }
  return out;
}

double cond_loglik_term(const SequencePair& pair, const CnnIdeModel& model, const GaussianNoise& noise) {
  require(pair.target.grid == pair.window.grid(), Errc::DimensionMismatch,
          "target and window grids differ");
  const Eigen::VectorXd mean = model.step_mean(pair.window);
  return noise.log_density(pair.target.values - mean);
}

LoglikGrad cond_loglik_grad(const SequencePair& pair, const CnnIdeModel& model,
                            const GaussianNoise& noise) {
  CnnCache cache;
  const DynamicsWeights w = cnn_forward(pair.window, model.cnn, &cache);
  const ThetaFields theta = theta_fields(model.basis, w, model.theta_min);
  const TransitionApply ta = apply_transition_with_jacobian(theta, pair.window.newest().values);
  const Eigen::VectorXd e = pair.target.values - ta.ky;
  LoglikGrad out;
  out.loglik = noise.log_density(e);
  // d loglik / d (K y) = Sigma^{-1} e
  const Eigen::VectorXd g = noise.solve(e);
  const DynamicsWeights gw =
      theta_backward(model.basis, theta, g.cwiseProduct(ta.d_theta1), g.cwiseProduct(ta.d_theta2),
                     g.cwiseProduct(ta.d_theta3));
  out.grad = cnn_backward(cache, gw);
  return out;
}

double full_loglik(const SequenceDataset& data, const CnnIdeModel& model, const GaussianNoise& noise,
                   int threads) {
  std::vector<double> terms(data.size());
  parallel_for(static_cast<int>(data.size()), threads,
               [&](int i) { terms[i] = cond_loglik_term(data[i], model, noise); });
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

namespace {

LoglikGrad batch_sum(const SequenceDataset& data, const std::vector<int>& batch,
                     const CnnIdeModel& model, const GaussianNoise& noise, int threads) {
  if (batch.empty()) fail(Errc::EmptyBatch, "minibatch is empty");
  std::vector<LoglikGrad> parts(batch.size());
  parallel_for(static_cast<int>(batch.size()), threads, [&](int k) {
    const int idx = batch[k];
    require(idx >= 0 && idx < static_cast<int>(data.size()), Errc::InvalidArgument,
            "batch index out of range");
    parts[k] = cond_loglik_grad(data[idx], model, noise);
  });
  LoglikGrad total{0.0, CnnParams(model.cnn.arch())};
  for (const auto& p : parts) {
    total.loglik += p.loglik;
    accumulate(total.grad, p.grad);
  }
  return total;
}

}  // namespace

LoglikGrad minibatch_grad(const SequenceDataset& data, const std::vector<int>& batch,
                          const CnnIdeModel& model, const GaussianNoise& noise, int threads) {
  LoglikGrad sum = batch_sum(data, batch, model, noise, threads);
  const double scale = static_cast<double>(data.size()) / static_cast<double>(batch.size());
  LoglikGrad out{sum.loglik * scale, CnnParams(model.cnn.arch())};
  accumulate(out.grad, sum.grad, scale);
  return out;
}

double default_theta1_init(const GridSpec& grid) {
  const double sd = 0.75 * grid.cell_width();
  return 0.5 * sd * sd;
}

CnnParams initial_params(const CnnArchitecture& arch, const RbfBasis& basis, std::uint64_t seed,
                         double theta1_init, double theta_min) {
  CnnParams p = CnnParams::initialize(arch, seed);
  if (theta1_init <= 0.0) theta1_init = default_theta1_init(basis.grid);
  set_diffusion_offset(p, basis, theta1_init, theta_min);
  return p;
}

TrainResult train_cnn(const SequenceDataset& data, const CnnIdeModel& model, const TrainingConfig& cfg) {
  require(cfg.valid_frac > 0.0 && cfg.valid_frac < 1.0, Errc::InvalidArgument,
          "validation fraction must lie in (0, 1)");
  require(cfg.batch >= 1 && cfg.max_epochs >= 1, Errc::InvalidArgument, "batch and epochs must be >= 1");
  require(data.size() >= 2, Errc::InvalidArgument, "need at least two sequence pairs");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  Rng rng(cfg.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_valid = std::clamp(static_cast<int>(std::lround(cfg.valid_frac * data.size())), 1,
                                 static_cast<int>(data.size()) - 1);

  TrainResult result;
  result.valid_index.assign(order.begin(), order.begin() + n_valid);
  result.train_index.assign(order.begin() + n_valid, order.end());
  std::sort(result.valid_index.begin(), result.valid_index.end());

  SequenceDataset train_set, valid_set;
  for (int i : result.train_index) train_set.push_back(data[i]);
  for (int i : result.valid_index) valid_set.push_back(data[i]);

  const GaussianNoise noise = GaussianNoise::isotropic(data.front().target.grid.size(), cfg.sigma2_0);
  CnnIdeModel current = model;
  AdamState adam = adam_init(current.cnn);
  const AdamConfig adam_cfg{cfg.lr};

  std::vector<int> train_order(train_set.size());
  std::iota(train_order.begin(), train_order.end(), 0);
  double prev_valid = 0.0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_order.begin(), train_order.end(), rng);
    double train_sum = 0.0;
    int batch_no = 0;
    for (std::size_t pos = 0; pos < train_order.size(); pos += cfg.batch, ++batch_no) {
      const std::size_t end = std::min(train_order.size(), pos + cfg.batch);
      const std::vector<int> batch(train_order.begin() + pos, train_order.begin() + end);
      LoglikGrad est = minibatch_grad(train_set, batch, current, noise, cfg.threads);
      if (!std::isfinite(est.loglik)) {
        fail(Errc::NonFiniteLoss, "non-finite log-likelihood in epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_no));
      }
      train_sum += est.loglik * static_cast<double>(batch.size()) / train_set.size();
      // ascend the log-likelihood
      CnnParams descent(current.cnn.arch());
      accumulate(descent, est.grad, -1.0);
      adam_step(current.cnn, descent, adam, adam_cfg);
    }
    const double valid = full_loglik(valid_set, current, noise, cfg.threads) / valid_set.size();
    if (!std::isfinite(valid)) {
      fail(Errc::NonFiniteLoss, "non-finite validation log-likelihood in epoch " + std::to_string(epoch));
    }
    const double seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.log.push_back({epoch, train_sum / train_set.size(), valid, seconds});
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %d  train %.4f  valid %.4f  (%.1fs)\n", epoch,
                   result.log.back().train_loglik, valid, seconds);
    }
    if (epoch > 1 && std::abs(valid - prev_valid) < cfg.tol * std::abs(valid)) {
      result.converged = true;
      break;
    }
    prev_valid = valid;
  }
  result.params = std::move(current.cnn);
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log, bool with_wall_time) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loglik,valid_loglik,wall_seconds\n";
  for (const auto& e : log) {
    os << e.epoch << ',' << e.train_loglik << ',' << e.valid_loglik << ','
       << (with_wall_time ? e.wall_seconds : 0.0) << '\n';
  }
  return os.str();
}

std::vector<Eigen::VectorXd> residuals(const SequenceDataset& data, const CnnIdeModel& model, int threads) {
  std::vector<Eigen::VectorXd> out(data.size());
  parallel_for(static_cast<int>(data.size()), threads, [&](int i) {
    out[i] = data[i].target.values - model.step_mean(data[i].window);
  });
  return out;
}

namespace {

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& cols) {
  Eigen::MatrixXd E(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t t = 0; t < cols.size(); ++t) E.col(static_cast<Eigen::Index>(t)) = cols[t];
  return E;
}

double profile(const GridSpec& grid, const Eigen::MatrixXd& E, double rho,
               const ResidualFitBounds& b, double* sigma2_hat) {
  // correlation matrix at unit variance, same nugget convention as noise_covariance
  const NoiseCovariance c = noise_covariance(grid, NoiseParams{1.0, rho});
  const auto L = c.chol.triangularView<Eigen::Lower>();
  const double quad = L.solve(E).squaredNorm();
  const double logdet = 2.0 * c.chol.diagonal().array().log().sum();
  const double m = static_cast<double>(E.rows()), T = static_cast<double>(E.cols());
  const double s2 = std::clamp(quad / (m * T), b.sigma2_min, b.sigma2_max);
  if (sigma2_hat) *sigma2_hat = s2;
  return -0.5 * m * T * std::log(2.0 * std::numbers::pi) - 0.5 * T * (m * std::log(s2) + logdet) -
         0.5 * quad / s2;
}

}  // namespace

double matern_profile_loglik(const GridSpec& grid, const std::vector<Eigen::VectorXd>& residuals,
                             double rho, const ResidualFitBounds& bounds, double* sigma2_hat) {
  return profile(grid, stack(residuals), rho, bounds, sigma2_hat);
}

ResidualFit fit_residual_matern(const GridSpec& grid, const std::vector<Eigen::VectorXd>& res,
                                const ResidualFitBounds& bounds) {
  require(res.size() >= 30, Errc::InvalidArgument,
          "need at least 30 residual fields, got " + std::to_string(res.size()));
  for (const auto& e : res) require(e.size() == grid.size(), Errc::DimensionMismatch, "residual size");
  const Eigen::MatrixXd E = stack(res);
  if (!(E.cwiseAbs().maxCoeff() > 1e-12)) fail(Errc::DegenerateResiduals, "residuals are all ~0");

  const double lo = std::log(bounds.rho_min_cells * grid.cell_width());
  const double hi = std::log(bounds.rho_max);
  constexpr int kGrid = 40;
  auto objective = [&](double log_rho) { return profile(grid, E, std::exp(log_rho), bounds, nullptr); };

  int best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    const double v = objective(lo + (hi - lo) * k / (kGrid - 1));
    if (v > best_val) {
      best_val = v;
      best = k;
    }
  }
  // golden-section refinement on the bracketing grid cells
  const double step = (hi - lo) / (kGrid - 1);
  double a = lo + std::max(0, best - 1) * step;
  double b = lo + std::min(kGrid - 1, best + 1) * step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = objective(c), fd = objective(d);
  for (int it = 0; it < 60 && (b - a) > 1e-7; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = objective(d);
    }
  }
  double log_rho = fc > fd ? c : d;
  double val = std::max(fc, fd);
  const double grid_pt = lo + best * step;
  if (best_val > val) {
    log_rho = grid_pt;
    val = best_val;
  }
  ResidualFit fit;
  fit.params.rho = std::exp(log_rho);
  profile(grid, E, fit.params.rho, bounds, &fit.params.sigma2);
  fit.loglik = val;
  fit.rho_at_lower_bound = log_rho <= lo + 1e-6;
  fit.sigma2_clamped = fit.params.sigma2 <= bounds.sigma2_min || fit.params.sigma2 >= bounds.sigma2_max;
  return fit;
}

}  // namespace cnnide
