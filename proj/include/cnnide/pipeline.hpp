#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cnnide/config.hpp"
#include "cnnide/io.hpp"
#include "cnnide/verify.hpp"

namespace cnnide::pipeline {

/// One scored forecaster: a directory holding manifest.json and member files.
struct PredictionSet {
  std::string method;
  std::vector<int> t;
  std::vector<std::string> member_files;  // relative to the directory
};

void write_manifest(const std::string& dir, const PredictionSet& set);
PredictionSet read_manifest(const std::string& dir);

/// Adds one step's members (pixels x N) to a prediction directory.
void add_prediction(const std::string& dir, PredictionSet& set, int t, const Eigen::MatrixXd& members);

struct CommonOptions {
  int threads = 0;
  std::ostream* log = nullptr;
};

/// frames.ideq (standardized, with records), flow_x.ideq, flow_y.ideq, obs.csv, run.cfg.
void cmd_simulate(const RunConfig& cfg, const std::string& out_dir, const CommonOptions& opt = {});

struct TrainOutputs {
  TrainResult result;
  Checkpoint checkpoint;
};

/// Stage-1 training over one or more sequence files (one zone each).
TrainOutputs cmd_train(const RunConfig& cfg, const std::vector<std::string>& data, const std::string& checkpoint_out,
                       const std::string& log_out, bool log_wall_time, const CommonOptions& opt = {});

/// Stage 2: fits the Matern forcing to the residuals and writes a new checkpoint.
ResidualFit cmd_fit_residuals(const RunConfig& cfg, const std::string& checkpoint_in,
                              const std::vector<std::string>& data, const std::string& checkpoint_out,
                              const CommonOptions& opt = {});

/// Runs the EnKF over the observation file. `steps` > 0 caps the number of
/// assimilation times. `init` optionally names a sequence whose first tau
/// frames seed the ensemble (zeros otherwise).
void cmd_filter(const RunConfig& cfg, const std::string& checkpoint, const std::string& obs_csv,
                const std::string& out_dir, int steps, const std::string& init, const CommonOptions& opt = {});

/// h-step forecast from a saved filter state (stem without extension).
void cmd_forecast(const RunConfig& cfg, const std::string& checkpoint, const std::string& state_stem, int h,
                  const std::string& out_dir, const CommonOptions& opt = {});

/// Sliding-window vanilla IDE one-step forecasts. Targets start at `first`
/// (tau when 0, matching the filter's first one-step forecast); `steps` > 0
/// caps their number.
void cmd_baseline(const RunConfig& cfg, const std::string& obs_csv, const std::string& out_dir, int first, int steps,
                  const CommonOptions& opt = {});

struct EvaluateOutputs {
  std::vector<ScoreReport> per_step;
  std::vector<ScoreReport> pooled;
  std::vector<ScoreRatio> ratios;
};

/// Scores every prediction directory on the times all of them share.
/// `reference` names the method used as ratio denominator (first if empty).
EvaluateOutputs cmd_evaluate(const RunConfig& cfg, const std::string& truth, const std::vector<std::string>& pred_dirs,
                             const std::string& out_dir, const std::string& reference, const CommonOptions& opt = {});

/// Per-pixel kernel parameters and flow arrows for the last tau frames of `window_file`.
std::string cmd_extract_flow(const RunConfig& cfg, const std::string& checkpoint, const std::string& window_file,
                             const std::string& out_csv, const CommonOptions& opt = {});

}  // namespace cnnide::pipeline
