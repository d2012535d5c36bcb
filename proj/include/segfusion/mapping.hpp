#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "segfusion/core.hpp"
#include "segfusion/geometry.hpp"
#include "segfusion/labels.hpp"
#include "segfusion/semfusion.hpp"

namespace segfusion {

struct Surfel {
  Vec3 position = Vec3::Zero();  // world frame, meters
  Vec3 normal = Vec3::UnitZ();   // world frame, unit length
  double radius = 0.0;
  double weight = 1.0;
  LabelId label = kNoLabel;
};

// Surfels are never removed, so a surfel's index is its stable id.
class SurfelMap {
 public:
  std::size_t size() const noexcept { return surfels_.size(); }
  bool empty() const noexcept { return surfels_.empty(); }

  const Surfel& operator[](SurfelId id) const { return surfels_[id]; }
  Surfel& operator[](SurfelId id) { return surfels_[id]; }

  SurfelId add(const Surfel& s) {
    surfels_.push_back(s);
    return static_cast<SurfelId>(surfels_.size() - 1);
  }

  std::span<const Surfel> surfels() const noexcept { return surfels_; }
  std::span<Surfel> surfels() noexcept { return surfels_; }

  void reserve(std::size_t n) { surfels_.reserve(n); }

  // Number of surfels carrying each label id in [0, label_bound).
  std::vector<std::size_t> label_histogram(LabelId label_bound) const {
    std::vector<std::size_t> counts(label_bound, 0);
    for (const Surfel& s : surfels_) {
      if (s.label < label_bound) ++counts[s.label];
    }
    return counts;
  }

 private:
  std::vector<Surfel> surfels_;
};

// Point rendering: every surfel lands on the single pixel it projects to and
// the nearest one wins (ties keep the lower surfel id).
inline RenderedLabelMap render_label_map(const SurfelMap& map, const Pose& pose,
                                         const CameraIntrinsics& intr) {
  RenderedLabelMap out(intr.width, intr.height);
  const Pose world_to_camera = pose.inverse();
  const auto surfels = map.surfels();
  for (std::size_t k = 0; k < surfels.size(); ++k) {
    const Vec3 p = world_to_camera.apply(surfels[k].position);
    const auto px = project(p, intr);
    if (!px) continue;
    double& z = out.depth(px->x, px->y);
    if (out.surfels(px->x, px->y) != kNoSurfel && z <= p.z()) continue;
    z = p.z();
    out.surfels(px->x, px->y) = static_cast<SurfelId>(k);
    out.labels(px->x, px->y) = surfels[k].label;
  }
  return out;
}

// Vertex and normal maps of the map as seen from `pose`, in that camera's
// frame; the reference input for ICP.
inline ModelView render_model_view(const SurfelMap& map, const Pose& pose,
                                   const CameraIntrinsics& intr) {
  const RenderedLabelMap rendered = render_label_map(map, pose, intr);
  ModelView view{VertexMap(intr.width, intr.height),
                 NormalMap(intr.width, intr.height), pose};
  const Pose world_to_camera = pose.inverse();
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const SurfelId k = rendered.surfels(x, y);
      if (k == kNoSurfel) continue;
      view.vertices.set(x, y, world_to_camera.apply(map[k].position));
      view.normals.set(x, y, world_to_camera.rotate(map[k].normal));
    }
  }
  return view;
}

struct FusionParams {
  double max_distance = 0.05;        // meters
  double max_angle = deg2rad(30.0);  // radians
  double max_weight = 100.0;
  int stride = 1;  // spawn new surfels only on every stride-th row and column
};

struct FusionStats {
  std::size_t updated = 0;
  std::size_t created = 0;
};

// Fuses one frame into the map. Each usable pixel is associated with the
// surfel rendered at the same pixel from `pose`; matches are averaged in with
// their current weight, everything else spawns a surfel.
inline FusionStats fuse_frame(SurfelMap& map, const VertexMap& vmap,
                              const NormalMap& nmap, const Grid<LabelId>& labels,
                              const Pose& pose, const CameraIntrinsics& intr,
                              const FusionParams& params = {}) {
  require_same_shape(vmap.points, nmap.points, "fuse_frame");
  require_same_shape(vmap.points, labels, "fuse_frame");
  if (vmap.width() != intr.width || vmap.height() != intr.height) {
    throw InvalidArgument("fuse_frame", "maps do not match intrinsics");
  }
  if (params.stride < 1) throw InvalidArgument("fuse_frame", "stride must be >= 1");
  pose.validate();

  const RenderedLabelMap rendered = render_label_map(map, pose, intr);
  const double cos_gate = std::cos(params.max_angle);
  const double dist2_gate = params.max_distance * params.max_distance;
  const double radius_scale = std::numbers::sqrt2 * 2.0 / (intr.fx + intr.fy);
  FusionStats stats;
  for (int y = 0; y < vmap.height(); ++y) {
    for (int x = 0; x < vmap.width(); ++x) {
      if (!vmap.is_valid(x, y) || !nmap.is_valid(x, y)) continue;
      const Vec3 p = pose.apply(vmap(x, y));
      const Vec3 n = pose.rotate(nmap(x, y));
      const double radius = vmap(x, y).z() * radius_scale;
      const LabelId label = labels(x, y);

      const SurfelId k = rendered.surfels(x, y);
      if (k != kNoSurfel) {
        Surfel& s = map[k];
        if ((s.position - p).squaredNorm() <= dist2_gate &&
            s.normal.dot(n) >= cos_gate) {
          const double w = s.weight;
          s.position = (w * s.position + p) / (w + 1.0);
          s.normal = (w * s.normal + n).normalized();
          s.radius = (w * s.radius + radius) / (w + 1.0);
          s.weight = std::min(w + 1.0, params.max_weight);
          if (label != kNoLabel) s.label = label;
          ++stats.updated;
          continue;
        }
      }
      if (x % params.stride != 0 || y % params.stride != 0) continue;
      map.add({p, n, radius, 1.0, label});
      ++stats.created;
    }
  }
  return stats;
}

// Relabels surfels of retired labels. Directives apply in order, so chains
// such as {7 -> 3, 3 -> 1} end at 1. Labels are checked against `table`
// before any of its records are merged.
inline void apply_merge_directives(SurfelMap& map,
                                   std::span<const MergeDirective> directives,
                                   const LabelTable& table) {
  if (directives.empty()) return;
  std::map<LabelId, LabelId> remap;
  for (const MergeDirective& d : directives) {
    if (!table.contains(d.retired) || !table.contains(d.survivor)) {
      throw UnknownLabel("merge", "directive " + std::to_string(d.retired) +
                                      " -> " + std::to_string(d.survivor) +
                                      " references an unknown label");
    }
    if (d.retired == d.survivor) {
      throw InvalidArgument("merge", "self-merge of label " + std::to_string(d.retired));
    }
    for (auto& [from, to] : remap) {
      if (to == d.retired) to = d.survivor;
    }
    remap[d.retired] = d.survivor;
  }
  for (Surfel& s : map.surfels()) {
    if (auto it = remap.find(s.label); it != remap.end()) s.label = it->second;
  }
}

}  // namespace segfusion
