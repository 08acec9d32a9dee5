#include "cnnide/kernel.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cnnide {

double default_bandwidth(int r) { return 1.5 / std::sqrt(static_cast<double>(r)); }

RbfBasis build_rbf_basis(const GridSpec& grid, int r, double bandwidth) {
  require(r >= 1, Errc::InvalidArgument, "need at least one basis function");
  require(bandwidth > 0.0, Errc::InvalidArgument, "basis bandwidth must be positive");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(r))));
  if (side * side != r) fail(Errc::NotPerfectSquare, std::to_string(r) + " is not a perfect square");

  RbfBasis b;
  b.grid = grid;
  b.r = r;
  b.bandwidth = bandwidth;
  b.centers.reserve(r);
  // centre j sits at lattice (row, col) = (j / side, j % side)
  for (int j = 0; j < r; ++j) {
    b.centers.push_back({(j % side + 0.5) / side, (j / side + 0.5) / side});
  }
  b.phi.resize(grid.size(), r);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (int i = 0; i < grid.size(); ++i) {
    const Point s = grid.center(i);
    for (int j = 0; j < r; ++j) {
      const double dx = s.x - b.centers[j].x;
      const double dy = s.y - b.centers[j].y;
      b.phi(i, j) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return b;
}

double softplus(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  require(y > 0.0, Errc::InvalidArgument, "softplus_inverse needs a positive argument");
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

ThetaFields theta_fields(const RbfBasis& basis, const DynamicsWeights& w, double theta_min) {
  const auto r = static_cast<Eigen::Index>(basis.r);
  if (w.w1.size() != r || w.w2.size() != r || w.w3.size() != r) {
    fail(Errc::DimensionMismatch, "dynamics weights must have r = " + std::to_string(r) + " entries");
  }
  ThetaFields t;
  t.grid = basis.grid;
  t.link_input = basis.phi * w.w1;
  t.theta1 = t.link_input.unaryExpr([&](double z) { return softplus(z) + theta_min; });
  t.theta2 = basis.phi * w.w2;
  t.theta3 = basis.phi * w.w3;
  return t;
}

ThetaFields constant_theta(const GridSpec& grid, double theta1, double theta2, double theta3) {
  ThetaFields t;
  t.grid = grid;
  t.theta1 = Eigen::VectorXd::Constant(grid.size(), theta1);
  t.theta2 = Eigen::VectorXd::Constant(grid.size(), theta2);
  t.theta3 = Eigen::VectorXd::Constant(grid.size(), theta3);
  t.link_input = Eigen::VectorXd::Zero(grid.size());
  return t;
}

double kernel_value(const Point& s, const Point& u, double theta1, double theta2, double theta3) {
  if (!(theta1 > 0.0)) fail(Errc::NonpositiveDiffusion, "theta1 must be positive");
  const double hx = s.x - theta2 - u.x;
  const double hy = s.y - theta3 - u.y;
  return std::exp(-(hx * hx + hy * hy) / (4.0 * theta1)) / (4.0 * std::numbers::pi * theta1);
}

namespace {

void check_theta(const ThetaFields& theta) {
  const auto m = static_cast<Eigen::Index>(theta.grid.size());
  require(theta.theta1.size() == m && theta.theta2.size() == m && theta.theta3.size() == m,
          Errc::DimensionMismatch, "theta fields do not match their grid");
  if (!(theta.theta1.minCoeff() > 0.0)) fail(Errc::NonpositiveDiffusion, "theta1 must be positive");
}

// Per-row separable factors: ex[c] for the column offsets, ey[r] for the rows.
struct RowFactors {
  double norm;
  Eigen::VectorXd dx, dy, ex, ey;
};

void row_factors(const GridSpec& g, const ThetaFields& theta, int i, RowFactors& f) {
  const int n = g.n();
  const Point s = g.center(i);
  const double t1 = theta.theta1[i];
  const double cx = s.x - theta.theta2[i];
  const double cy = s.y - theta.theta3[i];
  const double inv = 1.0 / (4.0 * t1);
  f.norm = g.cell_area() / (4.0 * std::numbers::pi * t1);
  for (int k = 0; k < n; ++k) {
    f.dx[k] = cx - g.coord(k);
    f.dy[k] = cy - g.coord(k);
    f.ex[k] = std::exp(-f.dx[k] * f.dx[k] * inv);
    f.ey[k] = std::exp(-f.dy[k] * f.dy[k] * inv);
  }
}

}  // namespace

TransitionMatrix transition_matrix(const ThetaFields& theta, double trunc_tol) {
  check_theta(theta);
  const GridSpec& g = theta.grid;
  const int n = g.n();
  TransitionMatrix out{g, Eigen::MatrixXd(g.size(), g.size())};
  RowFactors f{0.0, Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < g.size(); ++i) {
    row_factors(g, theta, i, f);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        double v = f.norm * f.ey[r] * f.ex[c];
        if (trunc_tol > 0.0 && v < trunc_tol) v = 0.0;
        out.K(i, g.index(r, c)) = v;
      }
    }
  }
  return out;
}

Field propagate(const TransitionMatrix& K, const Field& y) {
  require(y.grid == K.grid, Errc::DimensionMismatch, "propagate: field and operator grids differ");
  return Field(K.grid, K.K * y.values);
}

Field propagate(const TransitionMatrix& K, const Field& y, const Field& eta) {
  require(eta.grid == K.grid, Errc::DimensionMismatch, "propagate: forcing on a different grid");
  Field out = propagate(K, y);
  out.values += eta.values;
  return out;
}

Eigen::VectorXd apply_transition(const ThetaFields& theta, const Eigen::VectorXd& y) {
  check_theta(theta);
  const GridSpec& g = theta.grid;
  const int n = g.n();
  require(y.size() == g.size(), Errc::DimensionMismatch, "apply_transition: field size");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(
      y.data(), n, n);
  Eigen::VectorXd out(g.size());
  RowFactors f{0.0, Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < g.size(); ++i) {
    row_factors(g, theta, i, f);
    out[i] = f.norm * f.ey.dot(Y * f.ex);
  }
  return out;
}

TransitionApply apply_transition_with_jacobian(const ThetaFields& theta, const Eigen::VectorXd& y) {
  check_theta(theta);
  const GridSpec& g = theta.grid;
  const int n = g.n();
  const auto m = static_cast<Eigen::Index>(g.size());
  require(y.size() == m, Errc::DimensionMismatch, "apply_transition: field size");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(
      y.data(), n, n);

  TransitionApply out{Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m),
                      Eigen::VectorXd(m)};
  RowFactors f{0.0, Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  Eigen::VectorXd exdx(n), exdx2(n);
  for (int i = 0; i < m; ++i) {
    row_factors(g, theta, i, f);
    exdx = f.ex.cwiseProduct(f.dx);
    exdx2 = exdx.cwiseProduct(f.dx);
    const Eigen::VectorXd a = Y * f.ex;     // sum_c ex x
    const Eigen::VectorXd b = Y * exdx;     // sum_c ex dx x
    const Eigen::VectorXd c = Y * exdx2;    // sum_c ex dx^2 x
    const Eigen::VectorXd eydy = f.ey.cwiseProduct(f.dy);
    const double s0 = f.norm * f.ey.dot(a);
    const double sx = f.norm * f.ey.dot(b);
    const double sxx = f.norm * f.ey.dot(c);
    const double sy = f.norm * eydy.dot(a);
    const double syy = f.norm * eydy.cwiseProduct(f.dy).dot(a);
    const double t1 = theta.theta1[i];
    out.ky[i] = s0;
    out.d_theta1[i] = -s0 / t1 + (sxx + syy) / (4.0 * t1 * t1);
    out.d_theta2[i] = sx / (2.0 * t1);
    out.d_theta3[i] = sy / (2.0 * t1);
  }
  return out;
}

DynamicsWeights theta_backward(const RbfBasis& basis, const ThetaFields& theta,
                               const Eigen::VectorXd& g_theta1, const Eigen::VectorXd& g_theta2,
                               const Eigen::VectorXd& g_theta3) {
  const Eigen::VectorXd g_link =
      g_theta1.cwiseProduct(theta.link_input.unaryExpr([](double z) { return sigmoid(z); }));
  return {basis.phi.transpose() * g_link, basis.phi.transpose() * g_theta2,
          basis.phi.transpose() * g_theta3};
}

}  // namespace cnnide
