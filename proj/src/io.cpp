#include "cnnide/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace cnnide {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileError, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::FileError, "read error on '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) fail(Errc::FileError, "cannot create directory for '" + path + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::FileError, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::FileError, "write error on '" + path + "'");
}

namespace {

template <class T>
void put(std::string& s, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  s.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view b, std::string src) : bytes_(b), src_(std::move(src)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t len) {
    need(len);
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  void need(std::size_t k) const {
    if (bytes_.size() - pos_ < k) {
      fail(Errc::TruncatedPayload, src_ + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                                       std::to_string(k) + " more)");
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return src_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string src_;
};

void expect_magic(Reader& r, const char* magic) {
  if (r.remaining() < 4 || r.str(4) != magic)
    fail(Errc::BadMagic, r.source() + ": not a " + std::string(magic) + " file");
}

void put_double(std::string& s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, res.ptr);
}

}  // namespace

// ---- sequences ------------------------------------------------------------

std::string encode_sequence(const SequenceData& d) {
  require(d.scalar_bits == 32 || d.scalar_bits == 64, Errc::InvalidArgument, "scalar width must be 32 or 64");
  require(d.records.size() == d.frames.size(), Errc::DimensionMismatch, "one standardization record per frame");
  const int n = d.grid.n();
  std::string s = "IDEQ";
  put<std::uint32_t>(s, 1);
  put<std::uint32_t>(s, static_cast<std::uint32_t>(n));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(d.frames.size()));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(d.scalar_bits));
  put<std::uint32_t>(s, 1);
  s.reserve(s.size() + d.frames.size() * d.grid.size() * (d.scalar_bits / 8) + d.frames.size() * 16);
  for (const auto& f : d.frames) {
    require(f.grid == d.grid, Errc::DimensionMismatch, "frame grid differs from sequence grid");
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
      if (d.scalar_bits == 32) {
        put<float>(s, static_cast<float>(f.values[i]));
      } else {
        put<double>(s, f.values[i]);
      }
    }
  }
  for (const auto& r : d.records) {
    put<double>(s, r.mean);
    put<double>(s, r.sd);
  }
  return s;
}

SequenceData decode_sequence(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  expect_magic(r, "IDEQ");
  r.need(kSequenceHeaderBytes - 4);
  const auto version = r.get<std::uint32_t>();
  if (version != 1) fail(Errc::BadMagic, source + ": unsupported sequence version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>(), T = r.get<std::uint32_t>(), bits = r.get<std::uint32_t>(),
             flags = r.get<std::uint32_t>();
  if ((bits != 32 && bits != 64) || (flags & 1u) == 0 || n < 1 || n > 4096)
    fail(Errc::BadMagic, source + ": unsupported header (n=" + std::to_string(n) + ", bits=" + std::to_string(bits) + ")");
  SequenceData d;
  d.grid = GridSpec(static_cast<int>(n));
  d.scalar_bits = static_cast<int>(bits);
  const std::size_t m = static_cast<std::size_t>(n) * n;
  const std::size_t need = static_cast<std::size_t>(T) * (m * (bits / 8) + 16);
  if (r.remaining() != need) {
    fail(Errc::TruncatedPayload, source + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                                     std::to_string(need));
  }
  d.frames.reserve(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) v[i] = bits == 32 ? static_cast<double>(r.get<float>()) : r.get<double>();
    d.frames.emplace_back(d.grid, std::move(v));
  }
  for (std::uint32_t t = 0; t < T; ++t) {
    StandardizationRecord rec;
    rec.mean = r.get<double>();
    rec.sd = r.get<double>();
    d.records.push_back(rec);
  }
  return d;
}

void write_sequence(const std::string& path, const SequenceData& data) { write_file(path, encode_sequence(data)); }

SequenceData read_sequence(const std::string& path) { return decode_sequence(read_file(path), path); }

SequenceData plain_sequence(const std::vector<Field>& frames, int scalar_bits) {
  require(!frames.empty(), Errc::InvalidArgument, "empty sequence");
  SequenceData d;
  d.grid = frames.front().grid;
  d.frames = frames;
  d.records.assign(frames.size(), StandardizationRecord{});
  d.scalar_bits = scalar_bits;
  return d;
}

// ---- observations ---------------------------------------------------------

std::string observations_csv(const std::vector<Observations>& obs, const GridSpec& grid) {
  std::string s = "t,pixel_row,pixel_col,value\n";
  for (const auto& o : obs) {
    for (int k = 0; k < o.size(); ++k) {
      const int p = o.pixels[k];
      s += std::to_string(o.t) + "," + std::to_string(grid.row(p)) + "," + std::to_string(grid.col(p)) + ",";
      put_double(s, o.values[k]);
      s += '\n';
    }
  }
  return s;
}

std::vector<Observations> parse_observations_csv(std::string_view text, const GridSpec& grid, double sigma2_eps,
                                                 const std::string& source) {
  std::map<int, std::vector<std::pair<int, double>>> rows;
  std::size_t pos = 0;
  int line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "t,pixel_row,pixel_col,value")
        fail(Errc::FileError, source + ":1: expected header t,pixel_row,pixel_col,value");
      continue;
    }
    double f[4];
    std::size_t a = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t b = k < 3 ? line.find(',', a) : line.size();
      if (b == std::string_view::npos) fail(Errc::FileError, source + ":" + std::to_string(line_no) + ": expected 4 fields");
      const auto res = std::from_chars(line.data() + a, line.data() + b, f[k]);
      if (res.ec != std::errc() || res.ptr != line.data() + b)
        fail(Errc::FileError, source + ":" + std::to_string(line_no) + ": bad number in field " + std::to_string(k + 1));
      a = b + 1;
    }
    const int t = static_cast<int>(f[0]), r = static_cast<int>(f[1]), c = static_cast<int>(f[2]);
    if (f[0] != t || f[1] != r || f[2] != c || r < 0 || c < 0 || r >= grid.n() || c >= grid.n() || t < 0)
      fail(Errc::FileError, source + ":" + std::to_string(line_no) + ": pixel or time index out of range");
    rows[t].emplace_back(grid.index(r, c), f[3]);
  }
  if (header) fail(Errc::FileError, source + ": empty observations file");
  std::vector<Observations> out;
  for (auto& [t, v] : rows) {
    Observations o;
    o.t = t;
    o.sigma2_eps = sigma2_eps;
    o.values.resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      o.pixels.push_back(v[k].first);
      o.values[static_cast<Eigen::Index>(k)] = v[k].second;
    }
    out.push_back(std::move(o));
  }
  return out;
}

// ---- checkpoints ----------------------------------------------------------

CnnIdeModel Checkpoint::model() const {
  CnnIdeModel m;
  m.cnn = params;
  m.basis = build_rbf_basis(GridSpec(grid_n), params.arch().r, bandwidth);
  m.theta_min = theta_min;
  return m;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  const CnnArchitecture& a = ck.params.arch();
  std::string s = "IDCK";
  put<std::uint32_t>(s, 1);
  put<std::uint32_t>(s, static_cast<std::uint32_t>(a.tau));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(a.input_side));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(a.patch));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(a.r));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(a.filters.size()));
  for (int f : a.filters) put<std::uint32_t>(s, static_cast<std::uint32_t>(f));
  put<std::uint32_t>(s, static_cast<std::uint32_t>(ck.grid_n));
  put<double>(s, ck.bandwidth);
  put<double>(s, ck.theta_min);
  put<double>(s, ck.noise.sigma2);
  put<double>(s, ck.noise.rho);
  put<std::uint32_t>(s, ck.noise_fitted ? 1 : 0);
  put<std::uint32_t>(s, static_cast<std::uint32_t>(ck.training_echo.size()));
  s += ck.training_echo;
  const auto names = ck.params.tensor_names();
  put<std::uint32_t>(s, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = ck.params.tensor(name);
    put<std::uint32_t>(s, static_cast<std::uint32_t>(name.size()));
    s += name;
    put<std::uint32_t>(s, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint32_t>(s, static_cast<std::uint32_t>(d));
    for (double v : t.data) put<double>(s, v);
  }
  return s;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  expect_magic(r, "IDCK");
  const auto version = r.get<std::uint32_t>();
  if (version != 1) fail(Errc::BadMagic, source + ": unsupported checkpoint version " + std::to_string(version));
  CnnArchitecture a;
  a.tau = static_cast<int>(r.get<std::uint32_t>());
  a.input_side = static_cast<int>(r.get<std::uint32_t>());
  a.patch = static_cast<int>(r.get<std::uint32_t>());
  a.r = static_cast<int>(r.get<std::uint32_t>());
  const auto stages = r.get<std::uint32_t>();
  if (stages > 16) fail(Errc::ShapeMismatchOnLoad, source + ": implausible stage count " + std::to_string(stages));
  a.filters.clear();
  for (std::uint32_t k = 0; k < stages; ++k) a.filters.push_back(static_cast<int>(r.get<std::uint32_t>()));
  try {
    a.validate();
  } catch (const Error& e) {
    fail(Errc::ShapeMismatchOnLoad, source + ": bad architecture: " + e.what());
  }
  Checkpoint ck;
  ck.grid_n = static_cast<int>(r.get<std::uint32_t>());
  ck.bandwidth = r.get<double>();
  ck.theta_min = r.get<double>();
  ck.noise.sigma2 = r.get<double>();
  ck.noise.rho = r.get<double>();
  ck.noise_fitted = r.get<std::uint32_t>() != 0;
  ck.training_echo = r.str(r.get<std::uint32_t>());

  CnnParams p(a);
  const auto expected = p.tensor_names();
  const auto count = r.get<std::uint32_t>();
  if (count != expected.size()) {
    fail(Errc::ShapeMismatchOnLoad, source + ": " + std::to_string(count) + " tensors stored, architecture needs " +
                                        std::to_string(expected.size()));
  }
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.str(r.get<std::uint32_t>());
    if (name != expected[k]) fail(Errc::ShapeMismatchOnLoad, source + ": unexpected tensor '" + name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) fail(Errc::ShapeMismatchOnLoad, source + ": tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
    Tensor& dst = p.mutable_tensor(name);
    if (shape != dst.shape) fail(Errc::ShapeMismatchOnLoad, source + ": tensor '" + name + "' has the wrong shape");
    for (auto& v : dst.data) v = r.get<double>();
  }
  if (r.remaining() != 0) fail(Errc::TruncatedPayload, source + ": trailing bytes after the tensor table");
  ck.params = std::move(p);
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

// ---- filter outputs -------------------------------------------------------

std::string dynamics_csv(const std::vector<DynamicsSummary>& summaries, const GridSpec& grid) {
  std::string s = "t,forecast,pixel_row,pixel_col,mean_theta1,mean_theta2,mean_theta3,var_theta1,var_theta2,var_theta3";
  for (int b = 0; b < kDirectionBins; ++b) s += (b < 10 ? ",bin_0" : ",bin_") + std::to_string(b);
  s += '\n';
  for (const auto& d : summaries) {
    for (int i = 0; i < grid.size(); ++i) {
      s += std::to_string(d.t) + (d.forecast ? ",1," : ",0,") + std::to_string(grid.row(i)) + "," +
           std::to_string(grid.col(i));
      for (int a = 0; a < 3; ++a) {
        s += ',';
        put_double(s, d.mean_theta[a][i]);
      }
      for (int a = 0; a < 3; ++a) {
        s += ',';
        put_double(s, d.var_theta[a][i]);
      }
      for (int b = 0; b < kDirectionBins; ++b) s += "," + std::to_string(d.hist[i][b]);
      s += '\n';
    }
  }
  return s;
}

void write_ensemble(const std::string& stem, const Ensemble& ens) {
  std::vector<Field> frames;
  for (const auto& m : ens.members)
    for (const auto& f : m.frames()) frames.push_back(f);
  write_sequence(stem + ".ideq", plain_sequence(frames, 64));
  nlohmann::ordered_json j;
  j["t"] = ens.t;
  j["seed"] = ens.seed;
  j["members"] = ens.size();
  j["tau"] = ens.tau();
  j["frames"] = std::filesystem::path(stem + ".ideq").filename().string();
  write_file(stem + ".json", j.dump(2) + "\n");
}

Ensemble read_ensemble(const std::string& stem) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(stem + ".json"));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::FileError, stem + ".json: " + e.what());
  }
  Ensemble ens;
  int N = 0, tau = 0;
  try {
    ens.t = j.at("t").get<int>();
    ens.seed = j.at("seed").get<std::uint64_t>();
    N = j.at("members").get<int>();
    tau = j.at("tau").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::FileError, stem + ".json: " + e.what());
  }
  const SequenceData d = read_sequence(stem + ".ideq");
  if (N < 1 || tau < 1 || d.frames.size() != static_cast<std::size_t>(N) * tau)
    fail(Errc::ShapeMismatchOnLoad, stem + ".ideq: frame count does not match members x tau");
  for (int j2 = 0; j2 < N; ++j2)
    ens.members.emplace_back(std::vector<Field>(d.frames.begin() + j2 * tau, d.frames.begin() + (j2 + 1) * tau));
  return ens;
}

}  // namespace cnnide
