#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "cnnide/config.hpp"
#include "cnnide/io.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

using namespace cnnide;

namespace {

std::string from_hex(const std::string& h) {
  std::string out;
  for (std::size_t i = 0; i < h.size(); i += 2) out.push_back(static_cast<char>(std::stoi(h.substr(i, 2), nullptr, 16)));
  return out;
}

std::string temp_dir() {
  const auto p = std::filesystem::temp_directory_path() / ("cnnide_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p.string();
}

Checkpoint toy_checkpoint() {
  Checkpoint ck;
  ck.params = testing::toy_params(testing::toy_architecture(), 5);
  ck.grid_n = 8;
  ck.bandwidth = 0.7;
  ck.theta_min = 1e-6;
  ck.noise = {0.012, 0.045};
  ck.noise_fitted = true;
  ck.training_echo = "train.lr = 0.001\n";
  return ck;
}

}  // namespace

TEST_CASE("sequence golden bytes") {
  const GridSpec g(4);
  Field f(g);
  f.values[0] = 1.0;
  f.values[1] = -2.0;
  f.values[2] = 0.5;
  SequenceData d;
  d.grid = g;
  d.frames = {f};
  d.records = {{0.25, 2.0}};
  std::string hex = "49444551" "01000000" "04000000" "01000000" "20000000" "01000000";
  hex += "0000803f" "000000c0" "0000003f";
  for (int k = 0; k < 13; ++k) hex += "00000000";
  hex += "000000000000d03f" "0000000000000040";
  CHECK(encode_sequence(d) == from_hex(hex));
}

TEST_CASE("sequence round trip") {
  const GridSpec g(6);
  SequenceData d;
  d.grid = g;
  for (int t = 0; t < 5; ++t) {
    d.frames.push_back(testing::random_field(g, 30 + t));
    d.records.push_back({0.1 * t, 1.0 + t});
  }
  const std::string bytes = encode_sequence(d);
  CHECK(bytes.size() == kSequenceHeaderBytes + 5 * 36 * 4 + 5 * 16);
  const SequenceData back = decode_sequence(bytes);
  CHECK(encode_sequence(back) == bytes);
  CHECK(back.records[3].sd == 4.0);
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i < 36; ++i) CHECK(back.frames[t].values[i] == static_cast<double>(static_cast<float>(d.frames[t].values[i])));

  d.scalar_bits = 64;
  const SequenceData wide = decode_sequence(encode_sequence(d));
  for (int t = 0; t < 5; ++t) CHECK(wide.frames[t].values == d.frames[t].values);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_ERRC(decode_sequence(bad), Errc::BadMagic);
  CHECK_ERRC(decode_sequence(bytes.substr(0, bytes.size() - 1)), Errc::TruncatedPayload);
  CHECK_ERRC(decode_sequence(bytes.substr(0, 10)), Errc::TruncatedPayload);
  CHECK_ERRC(decode_sequence(""), Errc::BadMagic);

  const std::string path = temp_dir() + "/seq/a.ideq";
  write_sequence(path, d);
  CHECK(read_file(path) == encode_sequence(d));
  CHECK_ERRC(read_sequence(temp_dir() + "/missing.ideq"), Errc::FileError);
}

TEST_CASE("observations CSV") {
  const GridSpec g(5);
  std::vector<Observations> obs(2);
  obs[0].t = 3;
  obs[0].pixels = {0, 7, 24};
  obs[0].values = Eigen::Vector3d(0.1, -1.0 / 3.0, 1e-17);
  obs[1].t = 4;
  obs[1].pixels = {12};
  obs[1].values = Eigen::VectorXd::Constant(1, 2.5);
  const std::string csv = observations_csv(obs, g);
  CHECK(csv.rfind("t,pixel_row,pixel_col,value\n3,0,0,0.1\n3,1,2,", 0) == 0);
  const auto back = parse_observations_csv(csv, g, 0.02);
  REQUIRE(back.size() == 2);
  CHECK(back[0].t == 3);
  CHECK(back[0].pixels == obs[0].pixels);
  CHECK(back[0].values == obs[0].values);
  CHECK(back[1].values == obs[1].values);
  CHECK(back[1].sigma2_eps == 0.02);
  CHECK(observations_csv(back, g) == csv);

  CHECK_ERRC(parse_observations_csv("t,row,col,value\n", g, 0.01), Errc::FileError);
  CHECK_ERRC(parse_observations_csv("t,pixel_row,pixel_col,value\n0,9,0,1\n", g, 0.01), Errc::FileError);
  CHECK_ERRC(parse_observations_csv("t,pixel_row,pixel_col,value\n0,1,x,1\n", g, 0.01), Errc::FileError);
}

TEST_CASE("checkpoint round trip and tying") {
  const Checkpoint ck = toy_checkpoint();
  const std::string bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.params == ck.params);
  CHECK(back.noise.rho == 0.045);
  CHECK(back.noise_fitted);
  CHECK(back.training_echo == ck.training_echo);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.params.stage1_filters(3) == spatial_transpose(back.params.stage1_filters(2)));
  for (const auto& name : back.params.tensor_names()) CHECK(name.find("pathway3") == std::string::npos);
  CHECK(bytes.find("pathway3") == std::string::npos);

  const CnnIdeModel m = back.model();
  CHECK(m.basis.r == 4);
  CHECK(m.basis.bandwidth == 0.7);

  std::string bad = bytes;
  bad[1] = 'Q';
  CHECK_ERRC(decode_checkpoint(bad), Errc::BadMagic);
  // first-stage filter count in the header no longer matches the stored tensors
  std::string shape = bytes;
  shape[28] = 6;
  CHECK_ERRC(decode_checkpoint(shape), Errc::ShapeMismatchOnLoad);
  CHECK_ERRC(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Errc::TruncatedPayload);
}

TEST_CASE("ensemble state round trip") {
  const GridSpec g(4);
  Ensemble e;
  e.t = 7;
  e.seed = 0xfeedbeefcafeULL;
  for (int j = 0; j < 3; ++j)
    e.members.emplace_back(std::vector<Field>{testing::random_field(g, 2 * j), testing::random_field(g, 2 * j + 1)});
  const std::string stem = temp_dir() + "/state";
  write_ensemble(stem, e);
  const Ensemble back = read_ensemble(stem);
  CHECK(back.t == 7);
  CHECK(back.seed == e.seed);
  REQUIRE(back.size() == 3);
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q < 2; ++q) CHECK(back.members[j][q].values == e.members[j][q].values);
}

TEST_CASE("dynamics CSV layout") {
  const GridSpec g(4);
  DynamicsSummary s;
  s.t = 2;
  s.forecast = true;
  for (int a = 0; a < 3; ++a) {
    s.mean_theta[a] = Eigen::VectorXd::Constant(16, a);
    s.var_theta[a] = Eigen::VectorXd::Zero(16);
  }
  s.hist.assign(16, {});
  s.hist[5][3] = 4;
  const std::string csv = dynamics_csv({s}, g);
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(header ==
        "t,forecast,pixel_row,pixel_col,mean_theta1,mean_theta2,mean_theta3,var_theta1,var_theta2,var_theta3,"
        "bin_00,bin_01,bin_02,bin_03,bin_04,bin_05,bin_06,bin_07,bin_08,bin_09,bin_10,bin_11");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
  CHECK(csv.find("\n2,1,1,1,0,1,2,0,0,0,0,0,0,4,0,0,0,0,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("run config defaults and parsing") {
  const RunConfig d = parse_run_config("");
  CHECK(d.model_tau == 3);
  CHECK(d.train_batch == 16);
  CHECK(d.train_valid_frac == 0.10);
  CHECK(d.enkf_n_members == 64);
  CHECK(d.enkf_taper_c == 0.15);
  CHECK(d.obs_sigma2_eps == 0.01);

  const RunConfig c = parse_run_config("# comment\ngrid.n = 32  # trailing\n  model.filters = 4, 8\nseed=99\nenkf.taper = off\n");
  CHECK(c.grid_n == 32);
  CHECK(c.model_filters == std::vector<int>{4, 8});
  CHECK(c.seed == 99);
  CHECK_FALSE(c.enkf_taper);
  CHECK(c.architecture().input_side == 32);
  CHECK(c.training(1).seed == 99);

  CHECK(parse_run_config(c.dump()).dump() == c.dump());

  CHECK_ERRC(parse_run_config("grid.size = 4\n"), Errc::ConfigError);
  CHECK_ERRC(parse_run_config("grid.n = 4\ngrid.n = 8\n"), Errc::ConfigError);
  CHECK_ERRC(parse_run_config("train.lr = fast\n"), Errc::ConfigError);
  CHECK_ERRC(parse_run_config("train.lr\n"), Errc::ConfigError);
  CHECK_ERRC(parse_run_config("enkf.n_members = 1\n"), Errc::ConfigError);
  CHECK_ERRC(parse_run_config("sim.regime = vortex\n"), Errc::ConfigError);
  CHECK_ERRC(load_run_config("/nonexistent/run.cfg"), Errc::ConfigError);
  try {
    parse_run_config("seed = 1\nbogus = 2\n", "run.cfg");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
}
