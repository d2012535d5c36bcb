#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "segfusion/core.hpp"

namespace segfusion {

using LabelId = std::uint32_t;
using SurfelId = std::uint32_t;

// Unfilled pixel in a rendered label map, and the label of a surfel that has
// not been assigned to any segment.
inline constexpr LabelId kNoLabel = std::numeric_limits<LabelId>::max();
inline constexpr SurfelId kNoSurfel = std::numeric_limits<SurfelId>::max();

// Retire `retired`, folding it into `survivor`.
struct MergeDirective {
  LabelId retired = kNoLabel;
  LabelId survivor = kNoLabel;
  friend bool operator==(const MergeDirective&, const MergeDirective&) = default;
};

// Map surfels projected onto an image plane: the nearest surfel per pixel,
// its depth, and its segment label (kNoLabel where unfilled).
struct RenderedLabelMap {
  Grid<LabelId> labels;
  Grid<double> depth;
  Grid<SurfelId> surfels;

  RenderedLabelMap() = default;
  RenderedLabelMap(int width, int height)
      : labels(width, height, kNoLabel),
        depth(width, height, 0.0),
        surfels(width, height, kNoSurfel) {}

  int width() const noexcept { return labels.width(); }
  int height() const noexcept { return labels.height(); }
  bool filled(int x, int y) const { return labels(x, y) != kNoLabel; }
};

}  // namespace segfusion
