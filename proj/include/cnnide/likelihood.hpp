#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/model.hpp"

namespace cnnide {

struct SequencePair {
  FrameWindow window;  // Y_t^(tau), oldest first
  Field target;        // Y_{t+1}
  int zone = 0;
  int t = 0;           // time index of the newest window frame
};

using SequenceDataset = std::vector<SequencePair>;

/// All (window, next frame) pairs of one standardized sequence.
SequenceDataset make_pairs(const std::vector<Field>& frames, int tau, int zone = 0);

/// log N(target; K(window) Y_t, Sigma).
double cond_loglik_term(const SequencePair& pair, const CnnIdeModel& model, const GaussianNoise& noise);

struct LoglikGrad {
  double loglik = 0.0;
  CnnParams grad;  // gradient of loglik on the network parameters
};

LoglikGrad cond_loglik_grad(const SequencePair& pair, const CnnIdeModel& model,
                            const GaussianNoise& noise);

/// Sum of log L_t over the whole dataset.
double full_loglik(const SequenceDataset& data, const CnnIdeModel& model, const GaussianNoise& noise,
                   int threads = 0);

/// ((T - tau) / |batch|) * sum over the batch of log L_t and of its gradient,
/// where T - tau is the dataset size.
LoglikGrad minibatch_grad(const SequenceDataset& data, const std::vector<int>& batch,
                          const CnnIdeModel& model, const GaussianNoise& noise, int threads = 0);

struct TrainingConfig {
  int batch = 16;
  double lr = 3e-4;
  int max_epochs = 30;
  double valid_frac = 0.10;
  double tol = 1e-3;       // relative change in validation log-likelihood
  std::uint64_t seed = 1;
  double sigma2_0 = 0.01;  // stage-1 working variance
  double theta1_init = 0;  // <= 0: (0.75 cell)^2 / 2
  int threads = 0;
  bool verbose = false;
};

struct EpochLog {
  int epoch = 0;
  double train_loglik = 0.0;  // mean per pair
  double valid_loglik = 0.0;  // mean per pair
  double wall_seconds = 0.0;
};

struct TrainResult {
  CnnParams params;
  std::vector<EpochLog> log;
  std::vector<int> train_index, valid_index;
  bool converged = false;
};

/// Stage 1 of the two-stage fit: Adam on minibatches of the conditional
/// log-likelihood with Sigma = sigma2_0 I, stopped on the validation split.
/// `model.cnn` supplies the starting parameters.
TrainResult train_cnn(const SequenceDataset& data, const CnnIdeModel& model, const TrainingConfig& cfg);

/// Fresh network for `arch` with the diffusion head offset applied.
CnnParams initial_params(const CnnArchitecture& arch, const RbfBasis& basis, std::uint64_t seed,
                         double theta1_init = 0.0, double theta_min = kThetaMin);

double default_theta1_init(const GridSpec& grid);

std::string training_log_csv(const std::vector<EpochLog>& log, bool with_wall_time = true);

/// e_t = Y_{t+1} - K(Y_t^(tau)) Y_t for each pair.
std::vector<Eigen::VectorXd> residuals(const SequenceDataset& data, const CnnIdeModel& model,
                                       int threads = 0);

struct ResidualFit {
  NoiseParams params;
  double loglik = 0.0;
  bool rho_at_lower_bound = false;
  bool sigma2_clamped = false;
};

struct ResidualFitBounds {
  double sigma2_min = 1e-5, sigma2_max = 1.0;
  double rho_min_cells = 0.25;  // lower bound in cell widths
  double rho_max = 0.5;
};

/// Stage 2: Gaussian maximum likelihood of (sigma2, rho) from residual fields.
ResidualFit fit_residual_matern(const GridSpec& grid, const std::vector<Eigen::VectorXd>& residuals,
                                const ResidualFitBounds& bounds = {});

/// Profile log-likelihood at fixed rho with sigma2 at its (clamped) optimum.
double matern_profile_loglik(const GridSpec& grid, const std::vector<Eigen::VectorXd>& residuals,
                             double rho, const ResidualFitBounds& bounds, double* sigma2_hat = nullptr);

}  // namespace cnnide
