#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/grid.hpp"
#include "cnnide/kernel.hpp"

namespace cnnide {

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  bool operator==(const Tensor&) const = default;
};

/// Filters laid out as [out, in, patch, patch]; swaps the two spatial axes.
Tensor spatial_transpose(const Tensor& filters);

struct CnnArchitecture {
  int tau = 3;
  int input_side = 16;
  std::vector<int> filters = {8, 16, 32};
  int patch = 5;
  int r = 16;

  int stages() const noexcept { return static_cast<int>(filters.size()); }
  int final_side() const noexcept { return input_side >> stages(); }
  int flat_dim() const noexcept { return filters.back() * final_side() * final_side(); }
  void validate() const;

  static CnnArchitecture full_scale();  // 64x64 input, (64, 128, 256), r = 64
  bool operator==(const CnnArchitecture&) const = default;
};

/// Network parameters. Pathway 1 produces w1 (diffusion); pathways 2 and 3
/// produce w2 and w3. Pathway 3 reads the spatial transpose of the pathway-2
/// first-stage filters and shares everything else with pathway 2, including
/// the head (A3 == A2). Stages 2..L are a single trunk read by all pathways.
class CnnParams {
 public:
  CnnParams() = default;
  explicit CnnParams(const CnnArchitecture& arch);  // all zeros

  static CnnParams initialize(const CnnArchitecture& arch, std::uint64_t seed,
                              double head_scale = 1e-3);

  const CnnArchitecture& arch() const noexcept { return arch_; }

  // Stage-1 filters for pathway p in {1, 2, 3}; pathway 3 is computed from 2.
  Tensor stage1_filters(int pathway) const;
  const Tensor& stage1_bias(int pathway) const;
  const Tensor& trunk_filters(int stage) const { return trunk_filters_.at(stage - 2); }
  const Tensor& trunk_bias(int stage) const { return trunk_bias_.at(stage - 2); }
  // Head matrix [r, flat_dim] for output i in {1, 2, 3}; A3 is A2.
  const Tensor& head(int i) const { return i == 1 ? a1_ : a2_; }
  const Tensor& head_bias() const noexcept { return b1_; }

  /// Canonical stored tensors in a fixed order; the pathway-3 filters and A3
  /// are not stored.
  std::vector<std::string> tensor_names() const;
  const Tensor& tensor(const std::string& name) const;
  Tensor& mutable_tensor(const std::string& name);  // bumps generation()
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t parameter_count() const;

  /// Incremented by every mutable access; forward caches record it.
  std::uint64_t generation() const noexcept { return generation_; }
  void touch() noexcept { ++generation_; }

  bool operator==(const CnnParams& o) const;

 private:
  Tensor* find(const std::string& name);

  CnnArchitecture arch_;
  Tensor s1_filters_[2], s1_bias_[2];  // pathway 1, pathway 2
  std::vector<Tensor> trunk_filters_, trunk_bias_;
  Tensor a1_, b1_, a2_;
  std::uint64_t generation_ = 0;
};

/// dst += scale * src, tensor by tensor.
void accumulate(CnnParams& dst, const CnnParams& src, double scale = 1.0);

/// Sets the head bias of the diffusion output so theta1 starts near
/// theta1_init everywhere (regularised least squares through phi).
void set_diffusion_offset(CnnParams& params, const RbfBasis& basis, double theta1_init,
                          double theta_min = kThetaMin);

// Building blocks. Maps are [channels, side, side] row-major.

/// "Same" zero-padded convolution, F_k[i,j] = sum_q sum_{l,m} x_q[i-l, j-m] g_{q,k}[l,m] + b_k,
/// with l, m centred on the patch.
Tensor conv_same(const Tensor& input, const Tensor& filters, const Tensor& bias);
void conv_same_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                        Tensor* grad_input, Tensor& grad_filters, Tensor& grad_bias);

double rectify(double x) noexcept;
Tensor rectify(const Tensor& x);

/// Non-overlapping 2x2 max pooling with stride 2. argmax receives the flat
/// input index of each winner (first in scan order on ties).
Tensor maxpool2(const Tensor& x, std::vector<int>* argmax = nullptr);

struct StageCache {
  Tensor input;    // stage input
  Tensor pre;      // F^(l): convolution output before the rectifier
  Tensor pooled;   // rectified, pooled output
  std::vector<int> argmax;
};

/// Everything backward needs from a forward call.
struct CnnCache {
  const CnnParams* params = nullptr;
  std::uint64_t generation = 0;
  std::vector<StageCache> stages[3];  // per pathway
  Eigen::VectorXd flat[3];            // vectorised final feature stack per pathway
};

DynamicsWeights cnn_forward(const FrameWindow& window, const CnnParams& params,
                            CnnCache* cache = nullptr);

/// Gradients of a scalar loss given its gradients on (w1, w2, w3). The result
/// has the same layout as the parameters; tied storage accumulates both
/// pathway contributions.
CnnParams cnn_backward(const CnnCache& cache, const DynamicsWeights& upstream);

/// Flattened window input: [tau, side, side], oldest frame first.
Tensor window_tensor(const FrameWindow& window);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  CnnParams m, v;
};

AdamState adam_init(const CnnParams& params);

/// One Adam step descending `grads`.
void adam_step(CnnParams& params, const CnnParams& grads, AdamState& state, const AdamConfig& cfg);

/// Generic Adam on a flat vector, used by the tests' quadratic check.
void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, Eigen::VectorXd& m,
               Eigen::VectorXd& v, std::int64_t& step, const AdamConfig& cfg);

}  // namespace cnnide
