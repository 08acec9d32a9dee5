#pragma once

#include <Eigen/Dense>

#include "cnnide/cnn.hpp"
#include "cnnide/grid.hpp"
#include "cnnide/kernel.hpp"
#include "cnnide/parallel.hpp"

namespace cnnide {

struct NoiseParams {
  double sigma2 = 0.01;
  double rho = 0.04;
};

/// Matern covariance with smoothness 3/2.
double matern32(double d, double sigma2, double rho);

struct NoiseCovariance {
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd chol;  // lower factor, sigma = chol * chol^T
};

inline constexpr double kNuggetRel = 1e-8;

/// Sigma[i,j] = matern32(|s_i - s_j|) + nugget_rel * sigma2 * delta_ij.
NoiseCovariance noise_covariance(const GridSpec& grid, const NoiseParams& params,
                                 double nugget_rel = kNuggetRel);

/// Zero-mean Gaussian forcing, either isotropic (sigma2 I) or Matern.
class GaussianNoise {
 public:
  static GaussianNoise isotropic(int dim, double sigma2);
  static GaussianNoise matern(const GridSpec& grid, const NoiseParams& params,
                              double nugget_rel = kNuggetRel);

  int dim() const noexcept { return dim_; }
  bool is_isotropic() const noexcept { return isotropic_; }
  double sigma2() const noexcept { return sigma2_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& e) const;  // Sigma^{-1} e
  double log_det() const noexcept { return log_det_; }
  double log_density(const Eigen::VectorXd& e) const;
  Eigen::VectorXd sample(Rng& rng) const;
  Eigen::MatrixXd covariance() const;

 private:
  int dim_ = 0;
  bool isotropic_ = true;
  double sigma2_ = 1.0;
  double log_det_ = 0.0;
  Eigen::MatrixXd chol_;
};

/// The fitted network together with the basis that turns its outputs into
/// kernel fields.
struct CnnIdeModel {
  CnnParams cnn;
  RbfBasis basis;
  double theta_min = kThetaMin;

  ThetaFields theta(const FrameWindow& window) const;
  /// K(window) applied to the newest frame.
  Eigen::VectorXd step_mean(const FrameWindow& window) const;
};

}  // namespace cnnide
