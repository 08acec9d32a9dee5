#pragma once

#include <random>

#include <Eigen/Dense>

#include "cnnide/error.hpp"
#include "cnnide/grid.hpp"
#include "doctest.h"

namespace testing {

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

inline cnnide::Field random_field(const cnnide::GridSpec& g, std::uint64_t seed, double scale = 1.0) {
  return cnnide::Field(g, random_vector(g.size(), seed, scale));
}

inline cnnide::Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const cnnide::Error& e) {
    return e.code();
  }
  FAIL("expected cnnide::Error");
  return cnnide::Errc::InvalidArgument;
}

}  // namespace testing

#define CHECK_ERRC(expr, errc) CHECK(::testing::code_of([&] { (void)(expr); }) == (errc))
