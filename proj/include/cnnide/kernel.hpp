#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cnnide/grid.hpp"

namespace cnnide {

inline constexpr double kThetaMin = 1e-6;

/// Gaussian radial basis functions on a regular sqrt(r) x sqrt(r) lattice of
/// centres, evaluated at every cell centre of `grid` (phi is n^2 x r).
struct RbfBasis {
  GridSpec grid;
  int r = 0;
  double bandwidth = 0.0;
  std::vector<Point> centers;
  Eigen::MatrixXd phi;
};

double default_bandwidth(int r);

RbfBasis build_rbf_basis(const GridSpec& grid, int r, double bandwidth);

/// Basis coefficients for diffusion (w1, pre-link) and the two advection
/// components (w2 horizontal, w3 vertical).
struct DynamicsWeights {
  Eigen::VectorXd w1, w2, w3;
};

/// Kernel parameter fields on the lattice. theta1 is a diffusivity in squared
/// unit-square lengths; theta2/theta3 are displacements per step.
struct ThetaFields {
  GridSpec grid;
  Eigen::VectorXd theta1, theta2, theta3;
  Eigen::VectorXd link_input;  // phi * w1, kept for the softplus derivative
};

double softplus(double z) noexcept;
double sigmoid(double z) noexcept;
double softplus_inverse(double y);

/// theta1 = softplus(phi w1) + theta_min, theta2 = phi w2, theta3 = phi w3.
ThetaFields theta_fields(const RbfBasis& basis, const DynamicsWeights& w,
                         double theta_min = kThetaMin);

/// Spatially invariant fields, as used by the vanilla IDE.
ThetaFields constant_theta(const GridSpec& grid, double theta1, double theta2, double theta3);

/// Squared-exponential mixing kernel with advective shift:
///   k = exp(-|s - (theta2, theta3) - u|^2 / (4 theta1)) / (4 pi theta1).
/// Mass at u ends up around u + (theta2, theta3).
double kernel_value(const Point& s, const Point& u, double theta1, double theta2, double theta3);

struct TransitionMatrix {
  GridSpec grid;
  Eigen::MatrixXd K;
};

/// K[i,j] = cell_area * k(s_i, u_j; theta(s_i)). Entries below trunc_tol are
/// zeroed when trunc_tol > 0.
TransitionMatrix transition_matrix(const ThetaFields& theta, double trunc_tol = 0.0);

Field propagate(const TransitionMatrix& K, const Field& y);
Field propagate(const TransitionMatrix& K, const Field& y, const Field& eta);

/// K y computed row by row without materialising K, using the separability of
/// the Gaussian in x and y.
Eigen::VectorXd apply_transition(const ThetaFields& theta, const Eigen::VectorXd& y);

/// K y together with d(K y)_i / d theta_a(s_i) for a = 1, 2, 3. Row i of K only
/// depends on theta at s_i, so these three vectors are the full Jacobian.
struct TransitionApply {
  Eigen::VectorXd ky;
  Eigen::VectorXd d_theta1, d_theta2, d_theta3;
};

TransitionApply apply_transition_with_jacobian(const ThetaFields& theta, const Eigen::VectorXd& y);

/// Pulls gradients on the theta fields back to the basis weights.
DynamicsWeights theta_backward(const RbfBasis& basis, const ThetaFields& theta,
                               const Eigen::VectorXd& g_theta1, const Eigen::VectorXd& g_theta2,
                               const Eigen::VectorXd& g_theta3);

}  // namespace cnnide
