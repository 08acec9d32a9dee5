#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace cnnide {

/// Worker count used when a caller passes threads <= 0.
int default_threads();
void set_default_threads(int threads);

/// Runs fn(i) for i in [0, count) over up to `threads` workers with a static
/// partition. Callers write results into per-index slots and reduce afterwards
/// in index order, so results do not depend on the thread count.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

using Rng = std::mt19937_64;

/// Independent stream seed for (base, a, b) via splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng);

}  // namespace cnnide
