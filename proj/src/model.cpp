#include "cnnide/model.hpp"

#include <cmath>
#include <numbers>

namespace cnnide {

double matern32(double d, double sigma2, double rho) {
  require(d >= 0.0 && sigma2 > 0.0 && rho > 0.0, Errc::InvalidArgument,
          "matern32 needs d >= 0, sigma2 > 0, rho > 0");
  const double a = std::sqrt(3.0) * d / rho;
  return sigma2 * (1.0 + a) * std::exp(-a);
}

NoiseCovariance noise_covariance(const GridSpec& grid, const NoiseParams& params, double nugget_rel) {
  const int m = grid.size();
  NoiseCovariance out;
  out.sigma.resize(m, m);
  for (int i = 0; i < m; ++i) {
    const Point si = grid.center(i);
    out.sigma(i, i) = params.sigma2 * (1.0 + nugget_rel);
    for (int j = 0; j < i; ++j) {
      const double c = matern32(distance(si, grid.center(j)), params.sigma2, params.rho);
      out.sigma(i, j) = c;
      out.sigma(j, i) = c;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(out.sigma);
  if (llt.info() != Eigen::Success) {
    fail(Errc::CholeskyFailure, "Matern covariance is not numerically positive definite");
  }
  out.chol = llt.matrixL();
  return out;
}

GaussianNoise GaussianNoise::isotropic(int dim, double sigma2) {
  require(sigma2 > 0.0, Errc::InvalidArgument, "noise variance must be positive");
  GaussianNoise g;
  g.dim_ = dim;
  g.isotropic_ = true;
  g.sigma2_ = sigma2;
  g.log_det_ = dim * std::log(sigma2);
  return g;
}

GaussianNoise GaussianNoise::matern(const GridSpec& grid, const NoiseParams& params, double nugget_rel) {
  GaussianNoise g;
  g.dim_ = grid.size();
  g.isotropic_ = false;
  g.sigma2_ = params.sigma2;
  g.chol_ = noise_covariance(grid, params, nugget_rel).chol;
  g.log_det_ = 2.0 * g.chol_.diagonal().array().log().sum();
  return g;
}

Eigen::VectorXd GaussianNoise::solve(const Eigen::VectorXd& e) const {
  require(e.size() == dim_, Errc::DimensionMismatch, "noise dimension mismatch");
  if (isotropic_) return e / sigma2_;
  const auto L = chol_.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(e));
}

double GaussianNoise::log_density(const Eigen::VectorXd& e) const {
  double quad;
  if (isotropic_) {
    quad = e.squaredNorm() / sigma2_;
  } else {
    quad = chol_.triangularView<Eigen::Lower>().solve(e).squaredNorm();
  }
  return -0.5 * dim_ * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_ - 0.5 * quad;
}

Eigen::VectorXd GaussianNoise::sample(Rng& rng) const {
  const Eigen::VectorXd z = standard_normal(dim_, rng);
  if (isotropic_) return std::sqrt(sigma2_) * z;
  return chol_.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd GaussianNoise::covariance() const {
  if (isotropic_) return sigma2_ * Eigen::MatrixXd::Identity(dim_, dim_);
  return chol_ * chol_.transpose();
}

ThetaFields CnnIdeModel::theta(const FrameWindow& window) const {
  return theta_fields(basis, cnn_forward(window, cnn), theta_min);
}

Eigen::VectorXd CnnIdeModel::step_mean(const FrameWindow& window) const {
  return apply_transition(theta(window), window.newest().values);
}

}  // namespace cnnide
