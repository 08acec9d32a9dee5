#include "cnnide/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cnnide {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  std::size_t total = 1;
  for (int d : shape) total *= static_cast<std::size_t>(d);
  data.assign(total, 0.0);
}

Tensor spatial_transpose(const Tensor& f) {
  require(f.shape.size() == 4 && f.shape[2] == f.shape[3], Errc::ShapeMismatch,
          "spatial_transpose expects [out, in, p, p] filters");
  Tensor t(f.shape);
  const int p = f.shape[2];
  const std::size_t blocks = f.size() / static_cast<std::size_t>(p * p);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    const double* src = f.data.data() + blk * p * p;
    double* dst = t.data.data() + blk * p * p;
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) dst[a * p + b] = src[b * p + a];
  }
  return t;
}

void CnnArchitecture::validate() const {
  require(tau >= 2, Errc::ShapeMismatch, "tau must be >= 2");
  require(!filters.empty(), Errc::ShapeMismatch, "need at least one convolution stage");
  require(patch >= 1 && patch % 2 == 1, Errc::ShapeMismatch, "patch size must be odd");
  require(r >= 1, Errc::ShapeMismatch, "r must be >= 1");
  for (int k : filters) require(k >= 1, Errc::ShapeMismatch, "filter counts must be positive");
  require(input_side > 0 && (input_side % (1 << stages())) == 0, Errc::ShapeMismatch,
          "input side " + std::to_string(input_side) + " is not divisible by 2^" +
              std::to_string(stages()));
}

CnnArchitecture CnnArchitecture::full_scale() {
  CnnArchitecture a;
  a.tau = 3;
  a.input_side = 64;
  a.filters = {64, 128, 256};
  a.patch = 5;
  a.r = 64;
  return a;
}

CnnParams::CnnParams(const CnnArchitecture& arch) : arch_(arch) {
  arch_.validate();
  const int p = arch.patch;
  for (int k = 0; k < 2; ++k) {
    s1_filters_[k] = Tensor({arch.filters[0], arch.tau, p, p});
    s1_bias_[k] = Tensor({arch.filters[0]});
  }
  for (int l = 1; l < arch.stages(); ++l) {
    trunk_filters_.emplace_back(std::vector<int>{arch.filters[l], arch.filters[l - 1], p, p});
    trunk_bias_.emplace_back(std::vector<int>{arch.filters[l]});
  }
  a1_ = Tensor({arch.r, arch.flat_dim()});
  b1_ = Tensor({arch.r});
  a2_ = Tensor({arch.r, arch.flat_dim()});
}

CnnParams CnnParams::initialize(const CnnArchitecture& arch, std::uint64_t seed, double head_scale) {
  CnnParams p(arch);
  std::mt19937_64 rng(seed);
  auto glorot = [&](Tensor& t) {
    const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
    const double fan_out = static_cast<double>(t.shape[0]) * t.shape[2] * t.shape[3];
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& x : t.data) x = limit * u(rng);
  };
  auto uniform = [&](Tensor& t, double limit) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : t.data) x = limit * u(rng);
  };
  glorot(p.s1_filters_[0]);
  glorot(p.s1_filters_[1]);
  for (auto& t : p.trunk_filters_) glorot(t);
  uniform(p.a1_, head_scale);
  uniform(p.a2_, head_scale);
  return p;
}

Tensor CnnParams::stage1_filters(int pathway) const {
  require(pathway >= 1 && pathway <= 3, Errc::InvalidArgument, "pathway must be 1, 2 or 3");
  if (pathway == 3) return spatial_transpose(s1_filters_[1]);
  return s1_filters_[pathway - 1];
}

const Tensor& CnnParams::stage1_bias(int pathway) const {
  require(pathway >= 1 && pathway <= 3, Errc::InvalidArgument, "pathway must be 1, 2 or 3");
  return s1_bias_[pathway == 1 ? 0 : 1];
}

std::vector<std::string> CnnParams::tensor_names() const {
  std::vector<std::string> names = {"stage1.pathway1.filters", "stage1.pathway1.bias",
                                    "stage1.pathway2.filters", "stage1.pathway2.bias"};
  for (int l = 2; l <= arch_.stages(); ++l) {
    names.push_back("stage" + std::to_string(l) + ".pathway2.filters");
    names.push_back("stage" + std::to_string(l) + ".pathway2.bias");
  }
  names.insert(names.end(), {"head.A1", "head.b1", "head.A2"});
  return names;
}

Tensor* CnnParams::find(const std::string& name) {
  if (name == "stage1.pathway1.filters") return &s1_filters_[0];
  if (name == "stage1.pathway1.bias") return &s1_bias_[0];
  if (name == "stage1.pathway2.filters") return &s1_filters_[1];
  if (name == "stage1.pathway2.bias") return &s1_bias_[1];
  if (name == "head.A1") return &a1_;
  if (name == "head.b1") return &b1_;
  if (name == "head.A2") return &a2_;
  for (int l = 2; l <= arch_.stages(); ++l) {
    const std::string prefix = "stage" + std::to_string(l) + ".pathway2.";
    if (name == prefix + "filters") return &trunk_filters_[l - 2];
    if (name == prefix + "bias") return &trunk_bias_[l - 2];
  }
  return nullptr;
}

const Tensor& CnnParams::tensor(const std::string& name) const {
  const Tensor* t = const_cast<CnnParams*>(this)->find(name);
  if (!t) fail(Errc::InvalidArgument, "unknown parameter tensor '" + name + "'");
  return *t;
}

Tensor& CnnParams::mutable_tensor(const std::string& name) {
  Tensor* t = find(name);
  if (!t) fail(Errc::InvalidArgument, "unknown parameter tensor '" + name + "'");
  touch();
  return *t;
}

void CnnParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  touch();
  for (const auto& name : tensor_names()) fn(name, *find(name));
}

void CnnParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (const auto& name : tensor_names()) fn(name, tensor(name));
}

std::size_t CnnParams::parameter_count() const {
  std::size_t total = 0;
  for_each([&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

bool CnnParams::operator==(const CnnParams& o) const {
  if (!(arch_ == o.arch_)) return false;
  for (const auto& name : tensor_names())
    if (!(tensor(name) == o.tensor(name))) return false;
  return true;
}

void accumulate(CnnParams& dst, const CnnParams& src, double scale) {
  dst.for_each([&](const std::string& name, Tensor& t) {
    const Tensor& s = src.tensor(name);
    require(s.size() == t.size(), Errc::ShapeMismatch, "accumulate: tensor '" + name + "' differs");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * s[i];
  });
}

void set_diffusion_offset(CnnParams& params, const RbfBasis& basis, double theta1_init,
                          double theta_min) {
  require(theta1_init > theta_min, Errc::InvalidArgument, "theta1_init must exceed theta_min");
  require(basis.r == params.arch().r, Errc::DimensionMismatch, "basis size differs from network r");
  const double z = softplus_inverse(theta1_init - theta_min);
  const Eigen::MatrixXd& phi = basis.phi;
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += 1e-6 * gram.trace() / basis.r;
  const Eigen::VectorXd rhs = phi.transpose() * Eigen::VectorXd::Constant(phi.rows(), z);
  const Eigen::VectorXd b = gram.ldlt().solve(rhs);
  Tensor& b1 = params.mutable_tensor("head.b1");
  for (int j = 0; j < basis.r; ++j) b1[j] = b[j];
}

Tensor conv_same(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  require(input.shape.size() == 3 && filters.shape.size() == 4, Errc::ShapeMismatch,
          "conv_same: expected [c, s, s] input and [k, c, p, p] filters");
  const int cin = input.shape[0], side = input.shape[1];
  const int cout = filters.shape[0], p = filters.shape[2];
  if (filters.shape[1] != cin) {
    fail(Errc::ShapeMismatch, "filter depth " + std::to_string(filters.shape[1]) +
                                  " != input channels " + std::to_string(cin));
  }
  require(p % 2 == 1 && filters.shape[3] == p, Errc::ShapeMismatch, "patch must be square and odd");
  require(bias.size() == static_cast<std::size_t>(cout), Errc::ShapeMismatch, "bias size");
  const int h = p / 2;
  Tensor out({cout, side, side});
  for (int k = 0; k < cout; ++k) {
    double* o = out.data.data() + static_cast<std::size_t>(k) * side * side;
    std::fill(o, o + side * side, bias[k]);
    for (int q = 0; q < cin; ++q) {
      const double* x = input.data.data() + static_cast<std::size_t>(q) * side * side;
      const double* g = filters.data.data() + (static_cast<std::size_t>(k) * cin + q) * p * p;
      for (int a = 0; a < p; ++a) {
        const int di = h - a;  // source row = i + di
        const int i0 = std::max(0, -di), i1 = std::min(side, side - di);
        for (int b = 0; b < p; ++b) {
          const double w = g[a * p + b];
          const int dj = h - b;
          const int j0 = std::max(0, -dj), j1 = std::min(side, side - dj);
          for (int i = i0; i < i1; ++i) {
            double* orow = o + i * side;
            const double* xrow = x + (i + di) * side + dj;
            for (int j = j0; j < j1; ++j) orow[j] += w * xrow[j];
          }
        }
      }
    }
  }
  return out;
}

void conv_same_backward(const Tensor& input, const Tensor& filters, const Tensor& grad_out,
                        Tensor* grad_input, Tensor& grad_filters, Tensor& grad_bias) {
  const int cin = input.shape[0], side = input.shape[1];
  const int cout = filters.shape[0], p = filters.shape[2];
  const int h = p / 2;
  if (grad_input) *grad_input = Tensor(input.shape);
  grad_filters = Tensor(filters.shape);
  grad_bias = Tensor({cout});
  for (int k = 0; k < cout; ++k) {
    const double* go = grad_out.data.data() + static_cast<std::size_t>(k) * side * side;
    grad_bias[k] = std::accumulate(go, go + side * side, 0.0);
    for (int q = 0; q < cin; ++q) {
      const double* x = input.data.data() + static_cast<std::size_t>(q) * side * side;
      double* gx = grad_input ? grad_input->data.data() + static_cast<std::size_t>(q) * side * side
                              : nullptr;
      const std::size_t goff = (static_cast<std::size_t>(k) * cin + q) * p * p;
      const double* g = filters.data.data() + goff;
      double* gg = grad_filters.data.data() + goff;
      for (int a = 0; a < p; ++a) {
        const int di = h - a;
        const int i0 = std::max(0, -di), i1 = std::min(side, side - di);
        for (int b = 0; b < p; ++b) {
          const double w = g[a * p + b];
          const int dj = h - b;
          const int j0 = std::max(0, -dj), j1 = std::min(side, side - dj);
          double acc = 0.0;
          for (int i = i0; i < i1; ++i) {
            const double* gorow = go + i * side;
            const double* xrow = x + (i + di) * side + dj;
            for (int j = j0; j < j1; ++j) acc += gorow[j] * xrow[j];
            if (gx) {
              double* gxrow = gx + (i + di) * side + dj;
              for (int j = j0; j < j1; ++j) gxrow[j] += w * gorow[j];
            }
          }
          gg[a * p + b] = acc;
        }
      }
    }
  }
}

double rectify(double x) noexcept { return x > 0.0 ? x : 0.0; }

Tensor rectify(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data) v = rectify(v);
  return out;
}

Tensor maxpool2(const Tensor& x, std::vector<int>* argmax) {
  require(x.shape.size() == 3, Errc::ShapeMismatch, "maxpool2 expects [c, s, s]");
  const int c = x.shape[0], side = x.shape[1];
  if (side % 2 != 0) fail(Errc::OddSide, "maxpool2 needs an even side, got " + std::to_string(side));
  const int half = side / 2;
  Tensor out({c, half, half});
  if (argmax) argmax->assign(out.size(), 0);
  for (int k = 0; k < c; ++k) {
    for (int i = 0; i < half; ++i) {
      for (int j = 0; j < half; ++j) {
        int best = (k * side + 2 * i) * side + 2 * j;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const int idx = (k * side + 2 * i + a) * side + 2 * j + b;
            if (x[idx] > x[best]) best = idx;
          }
        const int o = (k * half + i) * half + j;
        out[o] = x[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

Tensor window_tensor(const FrameWindow& window) {
  const int side = window.grid().n();
  Tensor t({window.tau(), side, side});
  for (int q = 0; q < window.tau(); ++q) {
    const auto& v = window[q].values;
    std::copy(v.data(), v.data() + v.size(), t.data.begin() + static_cast<std::ptrdiff_t>(q) * side * side);
  }
  return t;
}

namespace {

Eigen::VectorXd run_pathway(const Tensor& x, const CnnParams& params, int pathway,
                            std::vector<StageCache>* cache) {
  const auto& arch = params.arch();
  Tensor cur = x;
  for (int l = 1; l <= arch.stages(); ++l) {
    Tensor pre = l == 1 ? conv_same(cur, params.stage1_filters(pathway), params.stage1_bias(pathway))
                        : conv_same(cur, params.trunk_filters(l), params.trunk_bias(l));
    std::vector<int> argmax;
    Tensor pooled = maxpool2(rectify(pre), &argmax);
    if (cache) cache->push_back({std::move(cur), std::move(pre), pooled, std::move(argmax)});
    cur = std::move(pooled);
  }
  return Eigen::Map<const Eigen::VectorXd>(cur.data.data(), static_cast<Eigen::Index>(cur.size()));
}

Eigen::VectorXd apply_head(const Tensor& a, const Eigen::VectorXd& f) {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
      a.data.data(), a.shape[0], a.shape[1]);
  return A * f;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

DynamicsWeights cnn_forward(const FrameWindow& window, const CnnParams& params, CnnCache* cache) {
  const auto& arch = params.arch();
  if (window.tau() != arch.tau || window.grid().n() != arch.input_side) {
    fail(Errc::ShapeMismatch, "window is " + std::to_string(window.tau()) + " x " +
                                  std::to_string(window.grid().n()) + "^2, network expects " +
                                  std::to_string(arch.tau) + " x " +
                                  std::to_string(arch.input_side) + "^2");
  }
  const Tensor x = window_tensor(window);
  if (cache) {
    *cache = CnnCache{};
    cache->params = &params;
    cache->generation = params.generation();
  }
  Eigen::VectorXd flat[3];
  for (int p = 1; p <= 3; ++p) {
    flat[p - 1] = run_pathway(x, params, p, cache ? &cache->stages[p - 1] : nullptr);
    if (cache) cache->flat[p - 1] = flat[p - 1];
  }
  DynamicsWeights w;
  const Tensor& b1 = params.head_bias();
  w.w1 = apply_head(params.head(1), flat[0]) +
         Eigen::Map<const Eigen::VectorXd>(b1.data.data(), static_cast<Eigen::Index>(b1.size()));
  w.w2 = apply_head(params.head(2), flat[1]);
  w.w3 = apply_head(params.head(3), flat[2]);
  return w;
}

CnnParams cnn_backward(const CnnCache& cache, const DynamicsWeights& upstream) {
  if (!cache.params || cache.generation != cache.params->generation()) {
    fail(Errc::StaleCache, "forward cache does not match the current parameters");
  }
  const CnnParams& params = *cache.params;
  const auto& arch = params.arch();
  CnnParams grads(arch);
  const int rows = arch.r, cols = arch.flat_dim();

  const Eigen::VectorXd* up[3] = {&upstream.w1, &upstream.w2, &upstream.w3};
  for (const auto* u : up) {
    require(u->size() == rows, Errc::DimensionMismatch, "upstream gradient size differs from r");
  }

  Tensor& ga1 = grads.mutable_tensor("head.A1");
  Tensor& gb1 = grads.mutable_tensor("head.b1");
  Tensor& ga2 = grads.mutable_tensor("head.A2");
  for (int i = 0; i < rows; ++i) gb1[i] = upstream.w1[i];

  for (int p = 1; p <= 3; ++p) {
    const auto& stages = cache.stages[p - 1];
    const Eigen::VectorXd& f = cache.flat[p - 1];
    const Eigen::VectorXd& u = *up[p - 1];
    Tensor& ga = p == 1 ? ga1 : ga2;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) ga[static_cast<std::size_t>(i) * cols + j] += u[i] * f[j];

    // gradient on the vectorised final features
    const Tensor& a = params.head(p);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
        a.data.data(), rows, cols);
    const Eigen::VectorXd gf = A.transpose() * u;
    Tensor grad_pooled(stages.back().pooled.shape);
    std::copy(gf.data(), gf.data() + gf.size(), grad_pooled.data.begin());

    for (int l = arch.stages(); l >= 1; --l) {
      const StageCache& sc = stages[l - 1];
      Tensor grad_pre(sc.pre.shape);
      for (std::size_t o = 0; o < grad_pooled.size(); ++o) {
        const int src = sc.argmax[o];
        if (sc.pre[src] > 0.0) grad_pre[src] += grad_pooled[o];
      }
      Tensor gin, gfil, gbias;
      if (l == 1) {
        conv_same_backward(sc.input, params.stage1_filters(p), grad_pre, nullptr, gfil, gbias);
        if (p == 1) {
          add_into(grads.mutable_tensor("stage1.pathway1.filters"), gfil);
          add_into(grads.mutable_tensor("stage1.pathway1.bias"), gbias);
        } else {
          // pathway 3 used the transposed view; transpose its gradient back
          add_into(grads.mutable_tensor("stage1.pathway2.filters"),
                   p == 3 ? spatial_transpose(gfil) : gfil);
          add_into(grads.mutable_tensor("stage1.pathway2.bias"), gbias);
        }
      } else {
        conv_same_backward(sc.input, params.trunk_filters(l), grad_pre, &gin, gfil, gbias);
        const std::string prefix = "stage" + std::to_string(l) + ".pathway2.";
        add_into(grads.mutable_tensor(prefix + "filters"), gfil);
        add_into(grads.mutable_tensor(prefix + "bias"), gbias);
        grad_pooled = std::move(gin);
      }
    }
  }
  return grads;
}

AdamState adam_init(const CnnParams& params) {
  return AdamState{0, CnnParams(params.arch()), CnnParams(params.arch())};
}

void adam_step(CnnParams& params, const CnnParams& grads, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.for_each([&](const std::string& name, Tensor& x) {
    const Tensor& g = grads.tensor(name);
    Tensor& m = state.m.mutable_tensor(name);
    Tensor& v = state.v.mutable_tensor(name);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      x[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  });
}

void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, Eigen::VectorXd& m,
               Eigen::VectorXd& v, std::int64_t& step, const AdamConfig& cfg) {
  ++step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  x.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

}  // namespace cnnide
