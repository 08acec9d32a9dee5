#include "cnnide/grid.hpp"

#include <cmath>
#include <string>

namespace cnnide {

GridSpec::GridSpec(int n) : n_(n) {
  require(n >= 4, Errc::InvalidArgument, "grid side must be >= 4, got " + std::to_string(n));
}

Field::Field(const GridSpec& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
  require(values.size() == g.size(), Errc::DimensionMismatch,
          "field has " + std::to_string(values.size()) + " values for a grid of " +
              std::to_string(g.size()));
}

FrameWindow::FrameWindow(std::vector<Field> frames) : frames_(std::move(frames)) {
  require(frames_.size() >= 2, Errc::InvalidArgument, "frame window needs tau >= 2");
  for (const auto& f : frames_) {
    require(f.grid == frames_.front().grid, Errc::DimensionMismatch,
            "frames in a window must share one grid");
  }
}

FrameWindow FrameWindow::shifted(Field next) const {
  require(next.grid == grid(), Errc::DimensionMismatch, "shifted frame on a different grid");
  std::vector<Field> out(frames_.begin() + 1, frames_.end());
  out.push_back(std::move(next));
  return FrameWindow(std::move(out));
}

std::pair<Field, StandardizationRecord> standardize(const Field& frame) {
  const auto& v = frame.values;
  require(v.allFinite(), Errc::InvalidArgument, "standardize: non-finite pixel");
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  if (!(sd > kSdFloor)) fail(Errc::DegenerateFrame, "frame has (near) zero variance");
  StandardizationRecord rec{mean, sd};
  return {standardize_with(frame, rec), rec};
}

Field standardize_with(const Field& frame, const StandardizationRecord& rec) {
  require(rec.sd > 0.0, Errc::InvalidArgument, "standardization sd must be positive");
  return Field(frame.grid, ((frame.values.array() - rec.mean) / rec.sd).matrix());
}

Field unstandardize(const Field& frame, const StandardizationRecord& rec) {
  require(rec.sd > 0.0, Errc::InvalidArgument, "standardization sd must be positive");
  return Field(frame.grid, (frame.values.array() * rec.sd + rec.mean).matrix());
}

std::vector<bool> interior_mask(const GridSpec& grid, int border) {
  const int n = grid.n();
  require(border >= 0, Errc::InvalidArgument, "border must be non-negative");
  if (2 * border >= n) {
    fail(Errc::BorderTooLarge,
         "border " + std::to_string(border) + " leaves no interior on n=" + std::to_string(n));
  }
  std::vector<bool> mask(grid.size(), false);
  for (int r = border; r < n - border; ++r)
    for (int c = border; c < n - border; ++c) mask[grid.index(r, c)] = true;
  return mask;
}

double distance(const Point& a, const Point& b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace cnnide
