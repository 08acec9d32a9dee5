#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cnnide/error.hpp"

namespace cnnide {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Square n x n lattice mapped onto the unit square. Pixels are row-major:
/// index i is (row, col) = (i / n, i % n), with x following the column and y
/// following the row.
class GridSpec {
 public:
  GridSpec() = default;
  explicit GridSpec(int n);

  int n() const noexcept { return n_; }
  int size() const noexcept { return n_ * n_; }
  double cell_width() const noexcept { return 1.0 / n_; }
  double cell_area() const noexcept { return 1.0 / (static_cast<double>(n_) * n_); }

  int index(int row, int col) const noexcept { return row * n_ + col; }
  int row(int i) const noexcept { return i / n_; }
  int col(int i) const noexcept { return i % n_; }

  Point center(int i) const noexcept {
    return {(col(i) + 0.5) / n_, (row(i) + 0.5) / n_};
  }
  double coord(int k) const noexcept { return (k + 0.5) / n_; }

  bool operator==(const GridSpec& other) const noexcept { return n_ == other.n_; }

 private:
  int n_ = 0;
};

struct Field {
  GridSpec grid;
  Eigen::VectorXd values;

  Field() = default;
  explicit Field(const GridSpec& g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}
  Field(const GridSpec& g, Eigen::VectorXd v);

  double operator()(int row, int col) const { return values[grid.index(row, col)]; }
  double& operator()(int row, int col) { return values[grid.index(row, col)]; }
};

/// tau frames, oldest first.
class FrameWindow {
 public:
  FrameWindow() = default;
  explicit FrameWindow(std::vector<Field> frames);

  int tau() const noexcept { return static_cast<int>(frames_.size()); }
  const GridSpec& grid() const { return frames_.front().grid; }
  const Field& newest() const { return frames_.back(); }
  const Field& operator[](int q) const { return frames_[q]; }
  Field& operator[](int q) { return frames_[q]; }
  const std::vector<Field>& frames() const noexcept { return frames_; }

  /// Drops the oldest frame and appends `next`.
  FrameWindow shifted(Field next) const;

 private:
  std::vector<Field> frames_;
};

struct StandardizationRecord {
  double mean = 0.0;
  double sd = 1.0;
};

inline constexpr double kSdFloor = 1e-8;

std::pair<Field, StandardizationRecord> standardize(const Field& frame);
Field standardize_with(const Field& frame, const StandardizationRecord& rec);
Field unstandardize(const Field& frame, const StandardizationRecord& rec);

std::vector<bool> interior_mask(const GridSpec& grid, int border);

double distance(const Point& a, const Point& b) noexcept;

}  // namespace cnnide
