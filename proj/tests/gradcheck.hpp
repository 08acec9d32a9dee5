#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cnnide/cnn.hpp"

namespace testing {

/// Rectifier signs and pooling winners of every stage, used to spot kinks.
inline std::vector<int> activation_signature(const cnnide::FrameWindow& w, const cnnide::CnnParams& p) {
  cnnide::CnnCache cache;
  cnnide::cnn_forward(w, p, &cache);
  std::vector<int> sig;
  for (const auto& path : cache.stages)
    for (const auto& st : path) {
      for (double v : st.pre.data) sig.push_back(v > 0.0);
      sig.insert(sig.end(), st.argmax.begin(), st.argmax.end());
    }
  return sig;
}

struct GradCheckReport {
  int checked = 0;
  int skipped = 0;
  double worst = 0.0;  // |analytic - fd| / max(1, |fd|)
  std::string worst_at;
};

/// Central differences on every stored parameter. A parameter is skipped when
/// either perturbation changes `signature` (a rectifier or pooling kink).
inline GradCheckReport check_gradients(cnnide::CnnParams& params, const cnnide::CnnParams& analytic,
                                       const std::function<double()>& loss,
                                       const std::function<std::vector<int>()>& signature, double h) {
  GradCheckReport rep;
  const std::vector<int> base = signature();
  for (const auto& name : params.tensor_names()) {
    const std::size_t count = params.tensor(name).size();
    for (std::size_t i = 0; i < count; ++i) {
      const double keep = params.tensor(name)[i];
      params.mutable_tensor(name)[i] = keep + h;
      const double up = loss();
      const bool kink_up = signature() != base;
      params.mutable_tensor(name)[i] = keep - h;
      const double dn = loss();
      const bool kink_dn = signature() != base;
      params.mutable_tensor(name)[i] = keep;
      if (kink_up || kink_dn) {
        ++rep.skipped;
        continue;
      }
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(analytic.tensor(name)[i] - fd) / std::max(1.0, std::abs(fd));
      ++rep.checked;
      if (err > rep.worst) {
        rep.worst = err;
        rep.worst_at = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

/// Small network with non-trivial heads and biases so every path carries signal.
inline cnnide::CnnParams toy_params(const cnnide::CnnArchitecture& arch, std::uint64_t seed) {
  cnnide::CnnParams p = cnnide::CnnParams::initialize(arch, seed, 0.5);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (const auto& name : p.tensor_names()) {
    if (name.find("bias") == std::string::npos && name != "head.b1") continue;
    for (auto& x : p.mutable_tensor(name).data) x = u(rng);
  }
  return p;
}

inline cnnide::CnnArchitecture toy_architecture() {
  cnnide::CnnArchitecture a;
  a.tau = 3;
  a.input_side = 8;
  a.filters = {3, 4, 5};
  a.patch = 3;
  a.r = 4;
  return a;
}

}  // namespace testing
