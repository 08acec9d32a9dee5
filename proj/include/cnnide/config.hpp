#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cnnide/cnn.hpp"
#include "cnnide/likelihood.hpp"
#include "cnnide/sim.hpp"

namespace cnnide {

/// `key = value` text configuration shared by all commands.
struct RunConfig {
  int grid_n = 16;

  int model_tau = 3;
  int model_r = 16;
  double model_bandwidth = 0.0;  // <= 0: 1.5 / sqrt(r)
  double model_theta_min = kThetaMin;
  std::vector<int> model_filters = {8, 16, 32};
  int model_patch = 5;

  int train_batch = 16;
  double train_lr = 3e-4;
  int train_max_epochs = 30;
  double train_valid_frac = 0.10;
  double train_tol = 1e-3;
  double train_sigma2_0 = 0.01;

  int enkf_n_members = 64;
  double enkf_taper_c = 0.15;
  bool enkf_taper = true;
  double enkf_jitter = 1.0;

  double obs_sigma2_eps = 0.01;
  double obs_fraction = 0.25;

  int mask_border = 0;

  int sim_T = 60;
  std::string sim_regime = "advection-diffusion";
  double sim_amplitude = 1.0;
  double sim_direction_deg = 0.0;
  double sim_rotation_deg = 0.0;
  double sim_diffusion = 0.05;
  double sim_forcing_sigma2 = 0.01;
  double sim_forcing_rho = 0.04;
  int sim_n_blobs = 3;
  double sim_blob_width = 1.5;
  bool sim_periodic = true;

  std::uint64_t seed = 1;

  CnnArchitecture architecture() const;
  double bandwidth() const;
  TrainingConfig training(int threads) const;
  SimConfig simulation() const;

  /// Canonical `key = value` listing of every setting.
  std::string dump() const;
};

/// Unknown keys, malformed values and duplicate keys raise ConfigError naming
/// the key and line.
RunConfig parse_run_config(std::string_view text, const std::string& source = "<memory>");
RunConfig load_run_config(const std::string& path);

}  // namespace cnnide
