#include "cnnide/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace cnnide {

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), Errc::InvalidArgument, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, Errc::InvalidArgument, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double crps_ensemble(const std::vector<double>& members, double y) {
  const std::size_t n = members.size();
  require(n >= 2, Errc::InvalidArgument, "CRPS needs at least 2 members");
  std::vector<double> x = members;
  std::sort(x.begin(), x.end());
  CompensatedSum abs_err, spread;
  for (std::size_t i = 0; i < n; ++i) {
    abs_err.add(std::abs(x[i] - y));
    // sum_{i<j} (x_j - x_i) = sum_i x_i (2i - n + 1) over sorted members
    spread.add(x[i] * (2.0 * static_cast<double>(i) - static_cast<double>(n) + 1.0));
  }
  const double N = static_cast<double>(n);
  return abs_err.value() / N - spread.value() / (N * N);
}

namespace {

long mask_count(const std::vector<bool>& mask, Eigen::Index size) {
  require(static_cast<Eigen::Index>(mask.size()) == size, Errc::DimensionMismatch, "mask size differs from field");
  const long c = std::count(mask.begin(), mask.end(), true);
  if (c == 0) fail(Errc::EmptyMask, "score mask selects no pixels");
  return c;
}

void check_interval(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                    const std::vector<bool>& mask) {
  require(lower.size() == upper.size() && lower.size() == truth.size(), Errc::DimensionMismatch,
          "interval and truth sizes differ");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (mask[i] && lower[i] > upper[i]) fail(Errc::InvertedInterval, "lower bound exceeds upper bound at pixel " + std::to_string(i));
  }
}

}  // namespace

double rmspe(const std::vector<Eigen::VectorXd>& pred, const std::vector<Eigen::VectorXd>& truth,
             const std::vector<bool>& mask) {
  require(pred.size() == truth.size() && !pred.empty(), Errc::DimensionMismatch, "prediction and truth counts differ");
  CompensatedSum s;
  long count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    require(pred[t].size() == truth[t].size(), Errc::DimensionMismatch, "prediction and truth sizes differ");
    count += mask_count(mask, pred[t].size());
    for (Eigen::Index i = 0; i < pred[t].size(); ++i)
      if (mask[i]) s.add((pred[t][i] - truth[t][i]) * (pred[t][i] - truth[t][i]));
  }
  return std::sqrt(s.value() / static_cast<double>(count));
}

double interval_score_90(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                         const std::vector<bool>& mask) {
  const long count = mask_count(mask, truth.size());
  check_interval(lower, upper, truth, mask);
  constexpr double kAlpha = 0.1;
  CompensatedSum s;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (!mask[i]) continue;
    double v = upper[i] - lower[i];
    if (truth[i] < lower[i]) v += (2.0 / kAlpha) * (lower[i] - truth[i]);
    if (truth[i] > upper[i]) v += (2.0 / kAlpha) * (truth[i] - upper[i]);
    s.add(v);
  }
  return s.value() / static_cast<double>(count);
}

double coverage_90(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, const Eigen::VectorXd& truth,
                   const std::vector<bool>& mask) {
  const long count = mask_count(mask, truth.size());
  check_interval(lower, upper, truth, mask);
  long hit = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    if (mask[i] && lower[i] <= truth[i] && truth[i] <= upper[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(count);
}

ScoreReport score_ensemble(const std::string& method, int zone, int t, const Eigen::MatrixXd& members,
                           const Eigen::VectorXd& truth, const std::vector<bool>& mask) {
  require(members.rows() == truth.size(), Errc::DimensionMismatch, "ensemble and truth sizes differ");
  const long count = mask_count(mask, truth.size());
  const Eigen::Index m = truth.size();
  Eigen::VectorXd lower(m), upper(m), mean = members.rowwise().mean();
  CompensatedSum crps;
  std::vector<double> row(static_cast<std::size_t>(members.cols()));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < members.cols(); ++j) row[j] = members(i, j);
    lower[i] = quantile(row, 0.05);
    upper[i] = quantile(row, 0.95);
    if (mask[i]) crps.add(crps_ensemble(row, truth[i]));
  }
  ScoreReport r;
  r.method = method;
  r.zone = zone;
  r.t = t;
  r.rmspe = rmspe({mean}, {truth}, mask);
  r.crps = crps.value() / static_cast<double>(count);
  r.is90 = interval_score_90(lower, upper, truth, mask);
  r.cov90 = coverage_90(lower, upper, truth, mask);
  r.pixels = count;
  return r;
}

ScoreReport aggregate(const std::vector<ScoreReport>& steps) {
  require(!steps.empty(), Errc::InvalidArgument, "nothing to aggregate");
  ScoreReport out;
  out.method = steps.front().method;
  out.zone = steps.front().zone;
  out.t = -1;
  CompensatedSum sq, crps, is, cov;
  for (const auto& s : steps) {
    const double w = static_cast<double>(s.pixels);
    sq.add(w * s.rmspe * s.rmspe);
    crps.add(w * s.crps);
    is.add(w * s.is90);
    cov.add(w * s.cov90);
    out.pixels += s.pixels;
  }
  const double total = static_cast<double>(out.pixels);
  out.rmspe = std::sqrt(sq.value() / total);
  out.crps = crps.value() / total;
  out.is90 = is.value() / total;
  out.cov90 = cov.value() / total;
  return out;
}

std::vector<ScoreRatio> score_ratio_table(const std::vector<ScoreReport>& methods, const ScoreReport& reference) {
  std::vector<ScoreRatio> out;
  for (const auto& m : methods) {
    if (m.pixels != reference.pixels) {
      fail(Errc::MismatchedCoverage, "method '" + m.method + "' scored " + std::to_string(m.pixels) +
                                         " pixel-steps, reference scored " + std::to_string(reference.pixels));
    }
    out.push_back({m.method, m.rmspe / reference.rmspe, m.crps / reference.crps});
  }
  return out;
}

namespace {

void put(std::string& s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, res.ptr);
}

}  // namespace

std::string reports_csv(const std::vector<ScoreReport>& reports) {
  std::string s = "method,zone,t,rmspe,crps,is90,cov90\n";
  for (const auto& r : reports) {
    s += r.method + "," + std::to_string(r.zone) + "," + std::to_string(r.t) + ",";
    put(s, r.rmspe);
    s += ',';
    put(s, r.crps);
    s += ',';
    put(s, r.is90);
    s += ',';
    put(s, r.cov90);
    s += '\n';
  }
  return s;
}

std::string ratios_csv(const std::vector<ScoreRatio>& ratios) {
  std::string s = "method,rmspe_ratio,crps_ratio\n";
  for (const auto& r : ratios) {
    s += r.method + ",";
    put(s, r.rmspe_ratio);
    s += ',';
    put(s, r.crps_ratio);
    s += '\n';
  }
  return s;
}

}  // namespace cnnide
