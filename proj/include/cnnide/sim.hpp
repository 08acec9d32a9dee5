#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/enkf.hpp"

namespace cnnide {

enum class Regime { TranslatingBlobs, AdvectionDiffusion, RotationalFlow };

Regime parse_regime(const std::string& name);
std::string regime_name(Regime r);

/// Synthetic data generator. Velocities are in cells per step, diffusion in
/// cells^2 per step.
struct SimConfig {
  int n = 16;
  int T = 50;
  int tau = 3;
  Regime regime = Regime::TranslatingBlobs;
  double amplitude = 1.0;
  double direction = std::numeric_limits<double>::quiet_NaN();  // radians from +x toward +y; NaN draws one
  double rotation = 0.0;   // blobs: radians per step about the domain centre
  double diffusion = 0.0;
  NoiseParams forcing{0.0, 0.1};  // sigma2 = 0 switches forcing off
  int n_blobs = 1;
  double blob_width = 1.5;  // blob sd in cells
  bool periodic = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimResult {
  std::vector<Field> frames;  // T raw frames
  // displacement from frame t to t+1 in unit-square lengths (T - 1 entries)
  std::vector<Eigen::VectorXd> flow_x, flow_y;
  double direction = 0.0;  // the direction actually used
};

SimResult simulate(const SimConfig& cfg);

/// `per_step` distinct pixels per frame, uniform without replacement, plus
/// N(0, sigma2_eps) noise. Observation t belongs to frame t.
std::vector<Observations> sample_observations(const std::vector<Field>& truth, int per_step, double sigma2_eps,
                                              std::uint64_t seed);

}  // namespace cnnide
