#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/error.hpp"

namespace cnnide {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

/// Linear interpolation between order statistics at position (N - 1) q.
double quantile(std::vector<double> values, double q);

/// (1/N) sum |x_i - y| - (1/(2 N^2)) sum_ij |x_i - x_j|.
double crps_ensemble(const std::vector<double>& members, double y);

/// Per-time fields are columns of the same length; mask selects scored pixels.
double rmspe(const std::vector<Eigen::VectorXd>& pred, const std::vector<Eigen::VectorXd>& truth,
             const std::vector<bool>& mask);

/// Mean over masked pixels of the 90% interval score.
double interval_score_90(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                         const std::vector<bool>& mask);
double coverage_90(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                   const std::vector<bool>& mask);

struct ScoreReport {
  std::string method;
  int zone = 0;
  int t = -1;  // -1 for an aggregate over times
  double rmspe = 0.0;
  double crps = 0.0;
  double is90 = 0.0;
  double cov90 = 0.0;
  long pixels = 0;  // masked pixels times steps
};

/// Scores one forecast ensemble (pixels x members) against truth on the mask.
ScoreReport score_ensemble(const std::string& method, int zone, int t, const Eigen::MatrixXd& members,
                           const Eigen::VectorXd& truth, const std::vector<bool>& mask);

/// Pools per-step reports of one method (RMSPE pooled in squares).
ScoreReport aggregate(const std::vector<ScoreReport>& steps);

struct ScoreRatio {
  std::string method;
  double rmspe_ratio = 1.0;
  double crps_ratio = 1.0;
};

/// Each method's pooled RMSPE and CRPS divided by the reference's.
std::vector<ScoreRatio> score_ratio_table(const std::vector<ScoreReport>& methods, const ScoreReport& reference);

std::string reports_csv(const std::vector<ScoreReport>& reports);
std::string ratios_csv(const std::vector<ScoreRatio>& ratios);

}  // namespace cnnide
