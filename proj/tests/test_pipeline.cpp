#include <algorithm>
#include <filesystem>
#include <map>
#include <unistd.h>

#include "cnnide/pipeline.hpp"
#include "helpers.hpp"

using namespace cnnide;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("cnnide_pipe_" + std::to_string(::getpid()) + "_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

RunConfig tiny_config() {
  return parse_run_config(
      "grid.n = 8\nmodel.r = 4\nmodel.filters = 4, 8\nmodel.patch = 3\ntrain.batch = 4\ntrain.max_epochs = 2\n"
      "enkf.n_members = 8\nsim.T = 40\nsim.forcing_rho = 0.1\nobs.fraction = 0.5\nseed = 5\n");
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
  return out;
}

void run_all(const RunConfig& cfg, const std::string& d) {
  pipeline::cmd_simulate(cfg, d + "/sim");
  pipeline::cmd_train(cfg, {d + "/sim/frames.ideq"}, d + "/ck1.bin", d + "/train.csv", false);
  pipeline::cmd_fit_residuals(cfg, d + "/ck1.bin", {d + "/sim/frames.ideq"}, d + "/ck2.bin");
  pipeline::cmd_filter(cfg, d + "/ck2.bin", d + "/sim/obs.csv", d + "/filt", 5, "");
  pipeline::cmd_forecast(cfg, d + "/ck2.bin", d + "/filt/state", 2, d + "/fc");
  pipeline::cmd_evaluate(cfg, d + "/sim/frames.ideq", {d + "/filt/forecast", d + "/filt/persistence"}, d + "/eval", "");
  pipeline::cmd_extract_flow(cfg, d + "/ck2.bin", d + "/sim/frames.ideq", d + "/flow.csv");
}

}  // namespace

TEST_CASE("manifest round trip") {
  const std::string d = temp_dir("manifest");
  pipeline::PredictionSet set{"m", {}, {}};
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(16, 3);
  pipeline::add_prediction(d, set, 4, X);
  pipeline::add_prediction(d, set, 5, 2.0 * X);
  pipeline::write_manifest(d, set);
  const auto back = pipeline::read_manifest(d);
  CHECK(back.method == "m");
  CHECK(back.t == std::vector<int>{4, 5});
  const SequenceData s = read_sequence(d + "/" + back.member_files[1]);
  CHECK(s.frames.size() == 3);
  CHECK(s.frames[2].values == 2.0 * X.col(2));
  CHECK_ERRC(pipeline::read_manifest(d + "/none"), Errc::FileError);
  write_file(d + "/bad/manifest.json", "{\"method\": 3}");
  CHECK_ERRC(pipeline::read_manifest(d + "/bad"), Errc::FileError);
}

TEST_CASE("evaluate with prediction equal to truth") {
  const std::string d = temp_dir("perfect");
  RunConfig cfg = parse_run_config("grid.n = 8\n");
  const GridSpec g(8);
  std::vector<Field> truth;
  for (int t = 0; t < 6; ++t) truth.push_back(testing::random_field(g, 70 + t));
  write_sequence(d + "/truth.ideq", plain_sequence(truth, 64));
  pipeline::PredictionSet set{"oracle", {}, {}};
  for (int t = 2; t < 6; ++t) pipeline::add_prediction(d + "/pred", set, t, truth[t].values.replicate(1, 4));
  pipeline::write_manifest(d + "/pred", set);
  const auto out = pipeline::cmd_evaluate(cfg, d + "/truth.ideq", {d + "/pred"}, d + "/eval", "");
  REQUIRE(out.pooled.size() == 1);
  CHECK(out.per_step.size() == 4);
  CHECK(out.pooled[0].rmspe == 0.0);
  CHECK(out.pooled[0].crps == 0.0);
  CHECK(out.pooled[0].cov90 == 1.0);
  CHECK(fs::exists(d + "/eval/scores.csv"));
  CHECK(fs::exists(d + "/eval/ratios.csv"));
}

TEST_CASE("evaluate scores only the shared times") {
  const std::string d = temp_dir("shared");
  RunConfig cfg = parse_run_config("grid.n = 4\n");
  const GridSpec g(4);
  std::vector<Field> truth(8, Field(g));
  write_sequence(d + "/truth.ideq", plain_sequence(truth));
  pipeline::PredictionSet a{"a", {}, {}}, b{"b", {}, {}};
  for (int t = 1; t < 6; ++t) pipeline::add_prediction(d + "/a", a, t, Eigen::MatrixXd::Ones(16, 2));
  for (int t = 3; t < 8; ++t) pipeline::add_prediction(d + "/b", b, t, Eigen::MatrixXd::Zero(16, 2));
  pipeline::write_manifest(d + "/a", a);
  pipeline::write_manifest(d + "/b", b);
  const auto out = pipeline::cmd_evaluate(cfg, d + "/truth.ideq", {d + "/a", d + "/b"}, d + "/eval", "b");
  CHECK(out.per_step.size() == 6);  // t = 3, 4, 5 for each
  CHECK(out.pooled[0].rmspe == 1.0);
  CHECK(out.pooled[1].rmspe == 0.0);
  CHECK(out.ratios[1].method == "b");

  pipeline::PredictionSet c{"c", {}, {}};
  pipeline::add_prediction(d + "/c", c, 7, Eigen::MatrixXd::Zero(16, 2));
  pipeline::write_manifest(d + "/c", c);
  CHECK_ERRC(pipeline::cmd_evaluate(cfg, d + "/truth.ideq", {d + "/a", d + "/c"}, d + "/eval", ""),
             Errc::MismatchedCoverage);
  CHECK_ERRC(pipeline::cmd_evaluate(cfg, d + "/truth.ideq", {d + "/a"}, d + "/eval", "zzz"), Errc::ConfigError);
}

TEST_CASE("simulate writes standardized frames and observations") {
  const std::string d = temp_dir("sim");
  const RunConfig cfg = tiny_config();
  pipeline::cmd_simulate(cfg, d);
  const SequenceData s = read_sequence(d + "/frames.ideq");
  CHECK(s.frames.size() == 40);
  CHECK(s.records.size() == 40);
  for (const auto& f : s.frames) CHECK(std::abs(f.values.mean()) < 1e-6);
  CHECK(read_sequence(d + "/flow_x.ideq").frames.size() == 39);
  const auto obs = parse_observations_csv(read_file(d + "/obs.csv"), GridSpec(8), 0.01);
  CHECK(obs.size() == 40);
  CHECK(obs[0].size() == 32);
  CHECK(parse_run_config(read_file(d + "/run.cfg")).dump() == cfg.dump());
}

TEST_CASE("pipeline end to end is deterministic") {
  const RunConfig cfg = tiny_config();
  const std::string a = temp_dir("det_a"), b = temp_dir("det_b");
  run_all(cfg, a);
  run_all(cfg, b);
  const auto sa = snapshot(a), sb = snapshot(b);
  REQUIRE(sa.size() == sb.size());
  CHECK(sa.size() > 20);
  for (const auto& [name, bytes] : sa) {
    INFO(name);
    REQUIRE(sb.count(name));
    CHECK(sb.at(name) == bytes);
  }
  // one-step forecasts start one step after the initial window
  const auto fset = pipeline::read_manifest(a + "/filt/forecast");
  CHECK(fset.t.front() == cfg.model_tau);
  CHECK(fset.t.size() == 4);
  const Checkpoint ck = read_checkpoint(a + "/ck2.bin");
  CHECK(ck.noise_fitted);
  CHECK(ck.training_echo == cfg.dump());
  const std::string flow = read_file(a + "/flow.csv");
  CHECK(std::count(flow.begin(), flow.end(), '\n') == 65);

  // a different seed changes the outputs
  RunConfig other = cfg;
  other.seed = 6;
  const std::string c = temp_dir("det_c");
  pipeline::cmd_simulate(other, c + "/sim");
  CHECK(read_file(c + "/sim/frames.ideq") != sa.at("sim/frames.ideq"));
}

TEST_CASE("commands report missing inputs") {
  const RunConfig cfg = tiny_config();
  const std::string d = temp_dir("missing");
  CHECK_ERRC(pipeline::cmd_train(cfg, {d + "/nope.ideq"}, d + "/ck", "", false), Errc::FileError);
  CHECK_ERRC(pipeline::cmd_train(cfg, {}, d + "/ck", "", false), Errc::ConfigError);
  CHECK_ERRC(pipeline::cmd_filter(cfg, d + "/nope.bin", d + "/obs.csv", d + "/f", 0, ""), Errc::FileError);
  // a checkpoint for another grid size
  pipeline::cmd_simulate(cfg, d + "/sim");
  pipeline::cmd_train(cfg, {d + "/sim/frames.ideq"}, d + "/ck.bin", "", false);
  RunConfig wide = cfg;
  wide.grid_n = 16;
  CHECK_ERRC(pipeline::cmd_filter(wide, d + "/ck.bin", d + "/sim/obs.csv", d + "/f", 0, ""), Errc::ConfigError);
}
