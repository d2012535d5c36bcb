#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "segfusion/core.hpp"
#include "segfusion/geometry.hpp"
#include "segfusion/labels.hpp"
#include "segfusion/prediction.hpp"
#include "segfusion/semfusion.hpp"

namespace segfusion {

using ClassMap = Grid<ClassIndex>;

// S~c: per-cell argmax class, lowest index on ties.
inline ClassMap argmax_class_map(const PredictionGrid& pred) {
  ClassMap out(pred.cols(), pred.rows(), 0);
  for (int t = 0; t < pred.rows(); ++t) {
    for (int s = 0; s < pred.cols(); ++s) out(s, t) = argmax(pred.cell(s, t)).first;
  }
  return out;
}

// 3x3 median of class indices; out-of-range neighbors replicate the border.
inline ClassMap median_filter_class_map(const ClassMap& in) {
  const int w = in.width();
  const int h = in.height();
  ClassMap out(w, h, 0);
  std::array<ClassIndex, 9> window{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          window[k++] = in(std::clamp(x + dx, 0, w - 1), yy);
        }
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out(x, y) = window[4];
    }
  }
  return out;
}

// S^c: every full-resolution pixel takes the class of its 8x8 cell.
inline ClassMap upsample_nearest(const ClassMap& low) {
  ClassMap out(low.width() * kPredictionStride, low.height() * kPredictionStride, 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out(x, y) = low(x / kPredictionStride, y / kPredictionStride);
    }
  }
  return out;
}

// B^s: a pixel is an edge when its class differs from its right, lower or
// lower-right neighbor (neighbors outside the image are ignored).
inline EdgeMap semantic_edge_map(const ClassMap& classes) {
  const int w = classes.width();
  const int h = classes.height();
  EdgeMap out(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const ClassIndex c = classes(x, y);
      const bool right = x + 1 < w && classes(x + 1, y) != c;
      const bool down = y + 1 < h && classes(x, y + 1) != c;
      const bool diag = x + 1 < w && y + 1 < h && classes(x + 1, y + 1) != c;
      out(x, y) = (right || down || diag) ? 1 : 0;
    }
  }
  return out;
}

inline EdgeMap combine_edges(const EdgeMap& geometric, const EdgeMap& semantic) {
  require_same_shape(geometric, semantic, "combine_edges");
  EdgeMap out(geometric.width(), geometric.height(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (geometric[i] | semantic[i]) ? 1 : 0;
  }
  return out;
}

// Frame-local segmentation: ids are contiguous from 0, edge pixels and
// undersized components hold kInvalidSegment.
struct SegmentFrame {
  static constexpr std::int32_t kInvalidSegment = -1;

  Grid<std::int32_t> ids;
  std::vector<std::size_t> sizes;

  std::size_t count() const noexcept { return sizes.size(); }
};

inline constexpr std::size_t kDefaultMinSegmentPixels = 64;

// 4-connected components of non-edge pixels.
inline SegmentFrame connected_components(
    const EdgeMap& edges, std::size_t min_segment_px = kDefaultMinSegmentPixels) {
  const int w = edges.width();
  const int h = edges.height();
  SegmentFrame out;
  out.ids = Grid<std::int32_t>(w, h, SegmentFrame::kInvalidSegment);

  // First pass labels every component; undersized ones are dropped after.
  Grid<std::int32_t> raw(w, h, -1);
  std::vector<std::size_t> raw_sizes;
  std::vector<std::size_t> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (edges(x0, y0) || raw(x0, y0) >= 0) continue;
      const auto id = static_cast<std::int32_t>(raw_sizes.size());
      std::size_t size = 0;
      raw(x0, y0) = id;
      stack.push_back(raw.index(x0, y0));
      while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        ++size;
        const int x = static_cast<int>(i % static_cast<std::size_t>(w));
        const int y = static_cast<int>(i / static_cast<std::size_t>(w));
        const int nbr[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (const auto& n : nbr) {
          if (!edges.contains(n[0], n[1])) continue;
          if (edges(n[0], n[1]) || raw(n[0], n[1]) >= 0) continue;
          raw(n[0], n[1]) = id;
          stack.push_back(raw.index(n[0], n[1]));
        }
      }
      raw_sizes.push_back(size);
    }
  }

  std::vector<std::int32_t> remap(raw_sizes.size(), SegmentFrame::kInvalidSegment);
  for (std::size_t r = 0; r < raw_sizes.size(); ++r) {
    if (raw_sizes[r] >= min_segment_px) {
      remap[r] = static_cast<std::int32_t>(out.sizes.size());
      out.sizes.push_back(raw_sizes[r]);
    }
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] >= 0) out.ids[i] = remap[static_cast<std::size_t>(raw[i])];
  }
  return out;
}

struct PropagationParams {
  double min_propagate_ratio = 0.3;  // share of a segment a label must cover
  double min_merge_ratio = 0.2;      // share each merged label must cover
};

struct PropagationResult {
  // Global label of every frame segment, already resolved through merges.
  std::vector<LabelId> assignment;
  // Labels this frame introduces, in ascending order starting at the table's
  // next id. The caller creates them in the table.
  std::vector<LabelId> fresh;
  // Sorted by retired id; every survivor is the smallest id of its group.
  std::vector<MergeDirective> merges;
};

namespace detail {

// Union-find over label ids with the smallest id as root.
class LabelUnion {
 public:
  LabelId find(LabelId l) {
    auto it = parent_.find(l);
    if (it == parent_.end()) {
      parent_.emplace(l, l);
      return l;
    }
    if (it->second == l) return l;
    const LabelId root = find(it->second);
    parent_[l] = root;
    return root;
  }

  void unite(LabelId a, LabelId b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

  std::vector<MergeDirective> directives() {
    std::vector<MergeDirective> out;
    std::vector<LabelId> keys;
    for (const auto& [k, v] : parent_) keys.push_back(k);
    for (LabelId k : keys) {
      const LabelId root = find(k);
      if (root != k) out.push_back({k, root});
    }
    return out;
  }

 private:
  std::map<LabelId, LabelId> parent_;
};

}  // namespace detail

// Matches frame segments to global labels by their overlap with the label map
// rendered at the current pose.
inline PropagationResult propagate_labels(const SegmentFrame& frame,
                                          const RenderedLabelMap& rendered,
                                          const LabelTable& table,
                                          const PropagationParams& params = {}) {
  require_same_shape(frame.ids, rendered.labels, "propagate_labels");

  // (segment, label) keys for every segment pixel that shows a label.
  std::vector<std::uint64_t> keys;
  keys.reserve(frame.ids.size());
  for (std::size_t i = 0; i < frame.ids.size(); ++i) {
    const std::int32_t s = frame.ids[i];
    const LabelId l = rendered.labels[i];
    if (s == SegmentFrame::kInvalidSegment || l == kNoLabel) continue;
    keys.push_back((static_cast<std::uint64_t>(s) << 32) | l);
  }
  std::sort(keys.begin(), keys.end());

  struct Overlap {
    LabelId label;
    std::size_t count;
  };
  std::vector<std::vector<Overlap>> overlaps(frame.count());
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    const auto seg = static_cast<std::size_t>(keys[i] >> 32);
    const auto label = static_cast<LabelId>(keys[i] & 0xffffffffu);
    if (!table.contains(label)) {
      throw UnknownLabel("propagate_labels",
                         "rendered label " + std::to_string(label) + " is not live");
    }
    overlaps[seg].push_back({label, j - i});
    i = j;
  }

  PropagationResult result;
  detail::LabelUnion groups;
  std::vector<LabelId> best(frame.count(), kNoLabel);
  for (std::size_t s = 0; s < frame.count(); ++s) {
    const double area = static_cast<double>(frame.sizes[s]);
    std::size_t best_count = 0;
    LabelId first_merge = kNoLabel;
    // Labels are in ascending order, so strict > keeps the smallest on ties.
    for (const Overlap& o : overlaps[s]) {
      if (o.count > best_count) {
        best_count = o.count;
        best[s] = o.label;
      }
      if (static_cast<double>(o.count) >= params.min_merge_ratio * area) {
        if (first_merge == kNoLabel) {
          first_merge = o.label;
        } else {
          groups.unite(first_merge, o.label);
        }
      }
    }
    if (static_cast<double>(best_count) < params.min_propagate_ratio * area) {
      best[s] = kNoLabel;
    }
  }

  LabelId next = table.next_id();
  result.assignment.resize(frame.count());
  for (std::size_t s = 0; s < frame.count(); ++s) {
    if (best[s] == kNoLabel) {
      result.assignment[s] = next;
      result.fresh.push_back(next++);
    } else {
      result.assignment[s] = groups.find(best[s]);
    }
  }
  result.merges = groups.directives();
  return result;
}

// Per-pixel global label after propagation (kNoLabel for invalid pixels).
inline Grid<LabelId> assign_pixel_labels(const SegmentFrame& frame,
                                         const PropagationResult& propagation) {
  Grid<LabelId> out(frame.ids.width(), frame.ids.height(), kNoLabel);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::int32_t s = frame.ids[i];
    if (s != SegmentFrame::kInvalidSegment) {
      out[i] = propagation.assignment[static_cast<std::size_t>(s)];
    }
  }
  return out;
}

}  // namespace segfusion
