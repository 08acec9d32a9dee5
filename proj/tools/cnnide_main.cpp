#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cnnide/error.hpp"
#include "cnnide/parallel.hpp"
#include "cnnide/pipeline.hpp"

using namespace cnnide;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool needs_out) {
  app->add_option("--config", c.config, "run configuration file (defaults when omitted)");
  auto* o = app->add_option("--out", c.out, "output path");
  if (needs_out) o->required();
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--threads", c.threads, "worker cap (0 = available cores)")->check(CLI::NonNegativeNumber);
  app->add_flag("--quiet", c.quiet, "no progress lines on stderr");
}

RunConfig effective_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_run_config("", "<defaults>") : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

pipeline::CommonOptions options(const Common& c) {
  pipeline::CommonOptions o;
  o.threads = c.threads;
  o.log = c.quiet ? nullptr : &std::cerr;
  return o;
}

int exit_code(ErrorCategory cat) {
  switch (cat) {
    case ErrorCategory::Config:
    case ErrorCategory::Precondition:
      return 2;
    case ErrorCategory::Io:
      return 3;
    case ErrorCategory::Numeric:
      return 4;
  }
  return 1;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CNN-IDE spatio-temporal forecasting"};
  app.require_subcommand(1);

  Common c;
  std::vector<std::string> data, preds;
  std::string checkpoint, obs, state, truth, reference, window, init, log_out;
  int steps = 0, first = 0;
  bool wall_time = false;

  auto* sim = app.add_subcommand("simulate", "synthetic frames, flow truth and observations");
  add_common(sim, c, true);

  auto* train = app.add_subcommand("train", "stage-1 CNN training");
  add_common(train, c, true);
  train->add_option("--data", data, "standardized sequence files, one per zone")->required();
  train->add_option("--log", log_out, "training log CSV");
  train->add_flag("--wall-time", wall_time, "include wall-clock seconds in the log (not reproducible)");

  auto* fit = app.add_subcommand("fit-residuals", "stage-2 Matern forcing fit");
  add_common(fit, c, true);
  fit->add_option("--checkpoint", checkpoint)->required();
  fit->add_option("--data", data)->required();

  auto* filt = app.add_subcommand("filter", "EnKF over an observation file");
  add_common(filt, c, true);
  filt->add_option("--checkpoint", checkpoint)->required();
  filt->add_option("--obs", obs)->required();
  filt->add_option("--steps", steps, "cap on assimilation times (0 = all)")->check(CLI::NonNegativeNumber);
  filt->add_option("--init", init, "sequence whose first tau frames seed the ensemble");

  auto* fc = app.add_subcommand("forecast", "h-step forecast from a filter state");
  add_common(fc, c, true);
  fc->add_option("--checkpoint", checkpoint)->required();
  fc->add_option("--state", state, "state stem (state.ideq + state.json)")->required();
  fc->add_option("--steps", steps, "forecast horizon")->required()->check(CLI::PositiveNumber);

  auto* base = app.add_subcommand("baseline", "sliding-window vanilla IDE forecasts");
  add_common(base, c, true);
  base->add_option("--obs", obs)->required();
  base->add_option("--from", first, "first target time (0 = model.tau)")->check(CLI::NonNegativeNumber);
  base->add_option("--steps", steps, "cap on target times (0 = all)")->check(CLI::NonNegativeNumber);

  auto* ev = app.add_subcommand("evaluate", "scores and ratio table");
  add_common(ev, c, true);
  ev->add_option("--truth", truth)->required();
  ev->add_option("--pred", preds, "prediction directories")->required();
  ev->add_option("--reference", reference, "method used as ratio denominator");

  auto* fl = app.add_subcommand("extract-flow", "per-pixel kernel parameters and flow arrows");
  add_common(fl, c, false);
  fl->add_option("--checkpoint", checkpoint)->required();
  fl->add_option("--window", window, "sequence file; its last tau frames are used")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = effective_config(c);
    const auto opt = options(c);
    if (c.threads > 0) set_default_threads(c.threads);
    if (*sim) {
      pipeline::cmd_simulate(cfg, c.out, opt);
    } else if (*train) {
      pipeline::cmd_train(cfg, data, c.out, log_out, wall_time, opt);
    } else if (*fit) {
      pipeline::cmd_fit_residuals(cfg, checkpoint, data, c.out, opt);
    } else if (*filt) {
      pipeline::cmd_filter(cfg, checkpoint, obs, c.out, steps, init, opt);
    } else if (*fc) {
      pipeline::cmd_forecast(cfg, checkpoint, state, steps, c.out, opt);
    } else if (*base) {
      pipeline::cmd_baseline(cfg, obs, c.out, first, steps, opt);
    } else if (*ev) {
      pipeline::cmd_evaluate(cfg, truth, preds, c.out, reference, opt);
    } else if (*fl) {
      const std::string csv = pipeline::cmd_extract_flow(cfg, checkpoint, window, c.out, opt);
      if (c.out.empty()) std::cout << csv;
    }
  } catch (const Error& e) {
    std::cerr << "error code=" << errc_name(e.code()) << " " << one_line(e.what()) << '\n';
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error code=Internal " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
