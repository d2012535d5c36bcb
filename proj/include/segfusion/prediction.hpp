#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "segfusion/core.hpp"

namespace segfusion {

// Frame-wise recognition output: one class distribution per 8x8 pixel block.
// Storage is row-major over cells with the class index fastest.
class PredictionGrid {
 public:
  PredictionGrid() = default;
  PredictionGrid(int cols, int rows, int num_classes)
      : cols_(cols), rows_(rows), num_classes_(num_classes) {
    if (cols <= 0 || rows <= 0) {
      throw InvalidArgument("prediction", "grid must be non-empty");
    }
    if (num_classes < 2) {
      throw InvalidArgument("prediction", "need at least 2 classes");
    }
    values_.assign(static_cast<std::size_t>(cols) * rows * num_classes,
                   1.0 / num_classes);
  }

  // Grid matching full-resolution intrinsics.
  static PredictionGrid for_image(const CameraIntrinsics& intr, int num_classes) {
    return {intr.width / kPredictionStride, intr.height / kPredictionStride,
            num_classes};
  }

  int cols() const noexcept { return cols_; }  // W / 8
  int rows() const noexcept { return rows_; }  // H / 8
  int num_classes() const noexcept { return num_classes_; }
  std::size_t cell_count() const noexcept {
    return static_cast<std::size_t>(cols_) * rows_;
  }

  std::span<const double> cell(int s, int t) const {
    return {values_.data() + offset(s, t),
            static_cast<std::size_t>(num_classes_)};
  }
  std::span<double> cell(int s, int t) {
    return {values_.data() + offset(s, t),
            static_cast<std::size_t>(num_classes_)};
  }

  // Class distribution that nearest-neighbor upsampling assigns to pixel (x, y).
  std::span<const double> at_pixel(int x, int y) const {
    return cell(x / kPredictionStride, y / kPredictionStride);
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  bool matches(const CameraIntrinsics& intr) const noexcept {
    return cols_ * kPredictionStride == intr.width &&
           rows_ * kPredictionStride == intr.height;
  }

  // Every cell is a distribution within `tol`.
  bool is_normalized(double tol = kDistributionTolerance) const {
    for (int t = 0; t < rows_; ++t) {
      for (int s = 0; s < cols_; ++s) {
        if (!is_distribution(cell(s, t), tol)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const PredictionGrid&, const PredictionGrid&) = default;

 private:
  std::size_t offset(int s, int t) const noexcept {
    return (static_cast<std::size_t>(t) * cols_ + s) * num_classes_;
  }

  int cols_ = 0;
  int rows_ = 0;
  int num_classes_ = 0;
  std::vector<double> values_;
};

}  // namespace segfusion
