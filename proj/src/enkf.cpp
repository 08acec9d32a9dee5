#include "cnnide/enkf.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace cnnide {

namespace {
constexpr std::uint64_t kForcingStream = 0x464f52434eULL;
constexpr std::uint64_t kObsStream = 0x4f4253ULL;
constexpr std::uint64_t kInitStream = 0x494e4954ULL;
}  // namespace

void Observations::validate(const GridSpec& grid) const {
  require(static_cast<Eigen::Index>(pixels.size()) == values.size(), Errc::DimensionMismatch,
          "observation pixels and values differ in length");
  require(sigma2_eps > 0.0, Errc::InvalidArgument, "measurement variance must be positive");
  std::unordered_set<int> seen;
  for (int p : pixels) {
    require(p >= 0 && p < grid.size(), Errc::InvalidArgument,
            "observation pixel " + std::to_string(p) + " is outside the grid");
    require(seen.insert(p).second, Errc::InvalidArgument,
            "pixel " + std::to_string(p) + " observed twice at t=" + std::to_string(t));
  }
}

Eigen::MatrixXd Ensemble::newest_matrix() const {
  Eigen::MatrixXd X(grid().size(), size());
  for (int j = 0; j < size(); ++j) X.col(j) = members[j].newest().values;
  return X;
}

Eigen::VectorXd Ensemble::mean() const { return newest_matrix().rowwise().mean(); }

Eigen::VectorXd Ensemble::sd() const {
  const Eigen::MatrixXd X = newest_matrix();
  const Eigen::MatrixXd A = X.colwise() - X.rowwise().mean();
  const double denom = std::max(1, size() - 1);
  return (A.rowwise().squaredNorm() / denom).cwiseSqrt();
}

double gaspari_cohn(double d, double c) {
  require(d >= 0.0 && c > 0.0, Errc::InvalidArgument, "gaspari_cohn needs d >= 0, c > 0");
  const double z = d / c;
  if (z >= 2.0) return 0.0;
  if (z <= 1.0) {
    return -0.25 * std::pow(z, 5) + 0.5 * std::pow(z, 4) + 0.625 * std::pow(z, 3) -
           (5.0 / 3.0) * z * z + 1.0;
  }
  return (1.0 / 12.0) * std::pow(z, 5) - 0.5 * std::pow(z, 4) + 0.625 * std::pow(z, 3) +
         (5.0 / 3.0) * z * z - 5.0 * z + 4.0 - (2.0 / 3.0) / z;
}

Ensemble init_ensemble(const std::vector<Field>& frames, int n_members, double jitter,
                       const GaussianNoise& spread, std::uint64_t seed, int t0) {
  if (frames.size() < 2) fail(Errc::InsufficientFrames, "ensemble initialisation needs tau >= 2 frames");
  require(n_members >= 2, Errc::InvalidArgument, "ensemble needs at least 2 members");
  require(jitter >= 0.0, Errc::InvalidArgument, "jitter must be non-negative");
  require(spread.dim() == frames.front().grid.size(), Errc::DimensionMismatch, "jitter noise dimension");
  Ensemble ens;
  ens.t = t0;
  ens.seed = seed;
  ens.members.reserve(n_members);
  for (int j = 0; j < n_members; ++j) {
    Rng rng(derive_seed(seed ^ kInitStream, static_cast<std::uint64_t>(t0), static_cast<std::uint64_t>(j)));
    std::vector<Field> w = frames;
    if (jitter > 0.0)
      for (auto& f : w) f.values += jitter * spread.sample(rng);
    ens.members.emplace_back(std::move(w));
  }
  return ens;
}

Ensemble enkf_predict(const Ensemble& ens, const Dynamics& dyn, int threads) {
  Ensemble out;
  out.t = ens.t + 1;
  out.seed = ens.seed;
  out.members.resize(ens.members.size());
  const GaussianNoise* eta = dyn.forcing();
  parallel_for(ens.size(), threads, [&](int j) {
    const FrameWindow& w = ens.members[j];
    Eigen::VectorXd next = dyn.step_mean(w);
    if (eta) {
      Rng rng(derive_seed(ens.seed ^ kForcingStream, static_cast<std::uint64_t>(out.t),
                          static_cast<std::uint64_t>(j)));
      next += eta->sample(rng);
    }
    out.members[j] = w.shifted(Field(w.grid(), std::move(next)));
  });
  return out;
}

Ensemble enkf_update(const Ensemble& ens, const Observations& obs, const TaperSpec& taper) {
  const GridSpec& g = ens.grid();
  obs.validate(g);
  if (obs.size() == 0) return ens;
  require(taper.c > 0.0, Errc::InvalidArgument, "taper half-length must be positive");
  const int N = ens.size(), p = obs.size(), m = g.size();

  const Eigen::MatrixXd X = ens.newest_matrix();
  const Eigen::VectorXd mean = X.rowwise().mean();
  const Eigen::MatrixXd A = X.colwise() - mean;
  Eigen::MatrixXd HA(p, N), HX(p, N);
  for (int k = 0; k < p; ++k) {
    HA.row(k) = A.row(obs.pixels[k]);
    HX.row(k) = X.row(obs.pixels[k]);
  }
  Eigen::MatrixXd Pxy = A * HA.transpose() / (N - 1.0);
  Eigen::MatrixXd Pyy = HA * HA.transpose() / (N - 1.0);
  if (taper.enabled) {
    for (int k = 0; k < p; ++k) {
      const Point ok = g.center(obs.pixels[k]);
      for (int i = 0; i < m; ++i) Pxy(i, k) *= gaspari_cohn(distance(g.center(i), ok), taper.c);
      for (int l = 0; l < p; ++l) Pyy(l, k) *= gaspari_cohn(distance(g.center(obs.pixels[l]), ok), taper.c);
    }
  }
  Pyy.diagonal().array() += obs.sigma2_eps;
  Eigen::LLT<Eigen::MatrixXd> llt(Pyy);
  if (llt.info() != Eigen::Success) {
    fail(Errc::SingularInnovationCov, "innovation covariance is not positive definite at t=" +
                                          std::to_string(obs.t));
  }
  // perturbed innovations, one column per member
  Eigen::MatrixXd D(p, N);
  const double sd = std::sqrt(obs.sigma2_eps);
  for (int j = 0; j < N; ++j) {
    Rng rng(derive_seed(ens.seed ^ kObsStream, static_cast<std::uint64_t>(obs.t), static_cast<std::uint64_t>(j)));
    D.col(j) = obs.values + sd * standard_normal(p, rng) - HX.col(j);
  }
  const Eigen::MatrixXd incr = Pxy * llt.solve(D);

  Ensemble out = ens;
  for (int j = 0; j < N; ++j) {
    FrameWindow& w = out.members[j];
    w[w.tau() - 1].values += incr.col(j);
  }
  return out;
}

int direction_bin(double theta2, double theta3) {
  double deg = std::atan2(theta3, theta2) * 180.0 / std::numbers::pi;
  deg = std::fmod(deg + 360.0, 360.0);
  const int b = static_cast<int>(deg / 30.0);
  return std::min(b, kDirectionBins - 1);
}

DynamicsSummary dynamics_summary(const Ensemble& ens, const CnnIdeModel& model, bool forecast, int threads) {
  std::vector<DynamicsWeights> w(ens.size());
  parallel_for(ens.size(), threads, [&](int j) { w[j] = cnn_forward(ens.members[j], model.cnn); });
  return summarize_weights(w, model.basis, model.theta_min, ens.t, forecast);
}

DynamicsSummary summarize_weights(const std::vector<DynamicsWeights>& w, const RbfBasis& basis, double theta_min,
                                  int t, bool forecast) {
  const int N = static_cast<int>(w.size()), m = basis.grid.size(), r = basis.r;
  require(N >= 1, Errc::InvalidArgument, "no members to summarise");
  std::vector<ThetaFields> th(N);
  for (int j = 0; j < N; ++j) th[j] = theta_fields(basis, w[j], theta_min);

  DynamicsSummary s;
  s.forecast = forecast;
  s.t = t;
  const double denom = std::max(1, N - 1);
  auto moments = [&](auto get, Eigen::Index len, Eigen::VectorXd& mu, Eigen::VectorXd& var) {
    mu = Eigen::VectorXd::Zero(len);
    var = Eigen::VectorXd::Zero(len);
    for (int j = 0; j < N; ++j) mu += get(j);
    mu /= N;
    for (int j = 0; j < N; ++j) var += (get(j) - mu).cwiseAbs2();
    var /= denom;
  };
  moments([&](int j) -> const Eigen::VectorXd& { return w[j].w1; }, r, s.mean_w.w1, s.var_w.w1);
  moments([&](int j) -> const Eigen::VectorXd& { return w[j].w2; }, r, s.mean_w.w2, s.var_w.w2);
  moments([&](int j) -> const Eigen::VectorXd& { return w[j].w3; }, r, s.mean_w.w3, s.var_w.w3);
  moments([&](int j) -> const Eigen::VectorXd& { return th[j].theta1; }, m, s.mean_theta[0], s.var_theta[0]);
  moments([&](int j) -> const Eigen::VectorXd& { return th[j].theta2; }, m, s.mean_theta[1], s.var_theta[1]);
  moments([&](int j) -> const Eigen::VectorXd& { return th[j].theta3; }, m, s.mean_theta[2], s.var_theta[2]);

  s.hist.assign(m, {});
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < m; ++i) ++s.hist[i][direction_bin(th[j].theta2[i], th[j].theta3[i])];
  return s;
}

ForecastResult forecast(const Ensemble& ens, const Dynamics& dyn, int h, int threads) {
  require(h >= 1, Errc::InvalidArgument, "forecast horizon must be >= 1");
  ForecastResult out;
  const Ensemble* cur = &ens;
  for (int k = 0; k < h; ++k) {
    out.ensembles.push_back(enkf_predict(*cur, dyn, threads));
    cur = &out.ensembles.back();
    if (const CnnIdeModel* m = dyn.cnn_model()) out.summaries.push_back(dynamics_summary(*cur, *m, true, threads));
  }
  return out;
}

}  // namespace cnnide
