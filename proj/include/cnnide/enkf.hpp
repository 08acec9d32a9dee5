#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/model.hpp"

namespace cnnide {

/// Z_t = H_t Y_t + eps_t with H_t selecting `pixels`.
struct Observations {
  int t = 0;
  std::vector<int> pixels;
  Eigen::VectorXd values;  // standardized units
  double sigma2_eps = 0.01;

  int size() const noexcept { return static_cast<int>(pixels.size()); }
  void validate(const GridSpec& grid) const;
};

/// N augmented states, each the tau most recent frames.
struct Ensemble {
  std::vector<FrameWindow> members;
  int t = 0;
  std::uint64_t seed = 0;

  int size() const noexcept { return static_cast<int>(members.size()); }
  const GridSpec& grid() const { return members.front().grid(); }
  int tau() const { return members.front().tau(); }
  /// Newest frames as columns (n^2 x N).
  Eigen::MatrixXd newest_matrix() const;
  Eigen::VectorXd mean() const;
  Eigen::VectorXd sd() const;  // sample sd, N - 1 denominator
};

struct TaperSpec {
  double c = 0.15;
  bool enabled = true;

  double support() const noexcept { return 2.0 * c; }
};

/// Gaspari-Cohn fifth-order compactly supported correlation, zero beyond 2c.
double gaspari_cohn(double d, double c);

/// The transition used to propagate members.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Eigen::VectorXd step_mean(const FrameWindow& window) const = 0;
  /// Forcing distribution; nullptr means a deterministic step.
  virtual const GaussianNoise* forcing() const = 0;
  virtual const CnnIdeModel* cnn_model() const { return nullptr; }
};

class CnnDynamics final : public Dynamics {
 public:
  CnnDynamics(CnnIdeModel model, GaussianNoise noise) : model_(std::move(model)), noise_(std::move(noise)) {}
  Eigen::VectorXd step_mean(const FrameWindow& window) const override { return model_.step_mean(window); }
  const GaussianNoise* forcing() const override { return &noise_; }
  const CnnIdeModel* cnn_model() const override { return &model_; }

 private:
  CnnIdeModel model_;
  GaussianNoise noise_;
};

/// State-independent linear test system: Y_{t+1} = K Y_t + eta.
class LinearDynamics final : public Dynamics {
 public:
  LinearDynamics(Eigen::MatrixXd K, std::optional<GaussianNoise> noise)
      : K_(std::move(K)), noise_(std::move(noise)) {}
  Eigen::VectorXd step_mean(const FrameWindow& window) const override { return K_ * window.newest().values; }
  const GaussianNoise* forcing() const override { return noise_ ? &*noise_ : nullptr; }
  const Eigen::MatrixXd& matrix() const noexcept { return K_; }

 private:
  Eigen::MatrixXd K_;
  std::optional<GaussianNoise> noise_;
};

/// Each member is `frames` plus jitter * (independent draw of `spread`) on every frame.
Ensemble init_ensemble(const std::vector<Field>& frames, int n_members, double jitter,
                       const GaussianNoise& spread, std::uint64_t seed, int t0 = 0);

/// Propagates every member one step and shifts its window. Member j at step t
/// draws its forcing from an RNG seeded by (ensemble seed, t, j).
Ensemble enkf_predict(const Ensemble& ens, const Dynamics& dyn, int threads = 0);

/// Perturbed-observation update of the newest frame; older frames pass through.
Ensemble enkf_update(const Ensemble& ens, const Observations& obs, const TaperSpec& taper);

inline constexpr int kDirectionBins = 12;

struct DynamicsSummary {
  bool forecast = false;
  int t = 0;
  DynamicsWeights mean_w, var_w;                     // per basis coefficient
  Eigen::VectorXd mean_theta[3], var_theta[3];       // per pixel
  std::vector<std::array<int, kDirectionBins>> hist;  // flow direction counts per pixel
};

/// Direction bin of a flow vector: floor(atan2(theta3, theta2) in degrees, mod 360, / 30).
int direction_bin(double theta2, double theta3);

DynamicsSummary dynamics_summary(const Ensemble& ens, const CnnIdeModel& model, bool forecast,
                                 int threads = 0);

/// Summary of per-member basis weights (the part of dynamics_summary after the CNN).
DynamicsSummary summarize_weights(const std::vector<DynamicsWeights>& w, const RbfBasis& basis, double theta_min,
                                  int t, bool forecast);

struct ForecastResult {
  std::vector<Ensemble> ensembles;          // lead 1..h
  std::vector<DynamicsSummary> summaries;   // empty unless the dynamics come from the CNN
};

ForecastResult forecast(const Ensemble& ens, const Dynamics& dyn, int h, int threads = 0);

}  // namespace cnnide
