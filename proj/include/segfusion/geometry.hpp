#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "segfusion/core.hpp"

namespace segfusion {

inline constexpr double deg2rad(double deg) {
  return deg * std::numbers::pi / 180.0;
}
inline constexpr double rad2deg(double rad) {
  return rad * 180.0 / std::numbers::pi;
}

// Per-pixel 3D points (or unit normals) with a validity mask.
struct PointMap {
  Grid<Vec3> points;
  Grid<std::uint8_t> valid;

  PointMap() = default;
  PointMap(int width, int height)
      : points(width, height, Vec3::Zero()), valid(width, height, 0) {}

  int width() const noexcept { return points.width(); }
  int height() const noexcept { return points.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }
  const Vec3& operator()(int x, int y) const { return points(x, y); }

  void set(int x, int y, const Vec3& p) {
    points(x, y) = p;
    valid(x, y) = 1;
  }
};

struct VertexMap : PointMap {
  using PointMap::PointMap;
};

struct NormalMap : PointMap {
  using PointMap::PointMap;
};

using EdgeMap = Grid<std::uint8_t>;

inline VertexMap compute_vertex_map(const DepthFrame& depth,
                                    const CameraIntrinsics& intr) {
  if (depth.width() != intr.width || depth.height() != intr.height) {
    throw InvalidArgument("vertex_map", "depth frame size does not match intrinsics");
  }
  VertexMap vmap(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth(x, y);
      if (d > 0.0) vmap.set(x, y, backproject({x, y}, d, intr));
    }
  }
  return vmap;
}

// Normal from the cross product of central differences, oriented toward the
// camera. Border pixels and pixels with an invalid 4-neighbor are invalid.
inline NormalMap compute_normal_map(const VertexMap& vmap) {
  const int w = vmap.width();
  const int h = vmap.height();
  NormalMap nmap(w, h);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      if (!vmap.is_valid(x, y) || !vmap.is_valid(x - 1, y) ||
          !vmap.is_valid(x + 1, y) || !vmap.is_valid(x, y - 1) ||
          !vmap.is_valid(x, y + 1)) {
        continue;
      }
      const Vec3 dx = vmap(x + 1, y) - vmap(x - 1, y);
      const Vec3 dy = vmap(x, y + 1) - vmap(x, y - 1);
      Vec3 n = dx.cross(dy);
      const double len = n.norm();
      if (!(len > 0.0) || !std::isfinite(len)) continue;
      n /= len;
      if (n.dot(vmap(x, y)) > 0.0) n = -n;
      nmap.set(x, y, n);
    }
  }
  return nmap;
}

struct EdgeThresholds {
  double max_normal_angle = deg2rad(20.0);  // radians
  double max_plane_distance = 0.05;         // meters
};

namespace detail {

inline double angle_between_units(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

}  // namespace detail

// B^g: pixel is an edge when it, or any of its right / down / down-right
// neighbors, lacks a valid vertex+normal, or when the normal angle or the
// point-to-plane distance to such a neighbor exceeds the thresholds.
inline EdgeMap geometric_edge_map(const VertexMap& vmap, const NormalMap& nmap,
                                  const EdgeThresholds& t = {}) {
  require_same_shape(vmap.points, nmap.points, "geometric_edges");
  const int w = vmap.width();
  const int h = vmap.height();
  const double cos_max = std::cos(t.max_normal_angle);
  EdgeMap edges(w, h, 0);
  auto usable = [&](int x, int y) {
    return vmap.is_valid(x, y) && nmap.is_valid(x, y);
  };
  static constexpr int kOffsets[3][2] = {{1, 0}, {0, 1}, {1, 1}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!usable(x, y)) {
        edges(x, y) = 1;
        continue;
      }
      const Vec3& v = vmap(x, y);
      const Vec3& n = nmap(x, y);
      for (const auto& o : kOffsets) {
        const int nx = x + o[0];
        const int ny = y + o[1];
        if (nx >= w || ny >= h) continue;
        if (!usable(nx, ny)) {
          edges(x, y) = 1;
          break;
        }
        // Compare cosines first; acos only near the threshold.
        const double c = n.dot(nmap(nx, ny));
        const bool bent = c < cos_max &&
                          detail::angle_between_units(n, nmap(nx, ny)) >
                              t.max_normal_angle;
        const bool apart =
            std::abs(n.dot(vmap(nx, ny) - v)) > t.max_plane_distance;
        if (bent || apart) {
          edges(x, y) = 1;
          break;
        }
      }
    }
  }
  return edges;
}

// ---------------------------------------------------------------------------
// Point-to-plane ICP with projective data association.

struct IcpParams {
  double max_distance = 0.1;          // association gate, meters
  double max_angle = deg2rad(30.0);   // association gate, radians
  int levels = 3;
  int max_iterations = 10;            // per pyramid level
  std::size_t min_inliers = 100;
  double max_condition = 1e6;
  double step_tolerance = 1e-10;      // stop when the update is this small
};

// Map rendered at `pose`; vertices and normals are in that camera's frame.
struct ModelView {
  VertexMap vertices;
  NormalMap normals;
  Pose pose;
};

struct IcpReport {
  Pose pose;
  double residual = 0.0;  // RMS point-to-plane distance at the finest level
  std::size_t inliers = 0;
  double condition = 0.0;  // of the last solved normal-equations matrix
  int iterations = 0;
  // Mean squared residual after each accepted step, one list per level
  // (coarsest first); the first entry is the starting error.
  std::vector<std::vector<double>> level_errors;
};

namespace detail {

template <typename M>
M subsample(const M& in) {
  M out(in.width() / 2, in.height() / 2);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (in.is_valid(2 * x, 2 * y)) out.set(x, y, in(2 * x, 2 * y));
    }
  }
  return out;
}

struct NormalEquations {
  Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
  double squared_error = 0.0;
  std::size_t count = 0;

  double mean_squared_error() const {
    return count ? squared_error / static_cast<double>(count)
                 : std::numeric_limits<double>::infinity();
  }
};

// `relative` maps the current camera frame into the model camera frame.
inline NormalEquations associate(const VertexMap& cv, const NormalMap& cn,
                                 const VertexMap& mv, const NormalMap& mn,
                                 const CameraIntrinsics& intr,
                                 const Pose& relative, const IcpParams& params) {
  NormalEquations eq;
  const double cos_gate = std::cos(params.max_angle);
  const double dist2_gate = params.max_distance * params.max_distance;
  for (int y = 0; y < cv.height(); ++y) {
    for (int x = 0; x < cv.width(); ++x) {
      if (!cv.is_valid(x, y) || !cn.is_valid(x, y)) continue;
      const Vec3 p = relative.apply(cv(x, y));
      const auto px = project(p, intr);
      if (!px) continue;
      if (!mv.is_valid(px->x, px->y) || !mn.is_valid(px->x, px->y)) continue;
      const Vec3& q = mv(px->x, px->y);
      const Vec3& nq = mn(px->x, px->y);
      if ((p - q).squaredNorm() > dist2_gate) continue;
      if (relative.rotate(cn(x, y)).dot(nq) < cos_gate) continue;
      const double r = nq.dot(p - q);
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = p.cross(nq);
      j.tail<3>() = nq;
      eq.ata.selfadjointView<Eigen::Upper>().rankUpdate(j);
      eq.atb += j * r;
      eq.squared_error += r * r;
      ++eq.count;
    }
  }
  eq.ata = eq.ata.selfadjointView<Eigen::Upper>();
  return eq;
}

inline double condition_number(const Eigen::Matrix<double, 6, 6>& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(
      a, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / ev.minCoeff();
}

}  // namespace detail

// Estimates the world pose of the current frame. Coarse-to-fine Gauss-Newton
// on the linearized point-to-plane error; a step is accepted only if it does
// not increase the mean squared residual.
inline IcpReport icp_point_to_plane(const VertexMap& current_vertices,
                                    const NormalMap& current_normals,
                                    const ModelView& model,
                                    const CameraIntrinsics& intr,
                                    const Pose& init,
                                    const IcpParams& params = {}) {
  require_same_shape(current_vertices.points, model.vertices.points, "icp");
  require_same_shape(current_normals.points, model.normals.points, "icp");
  require_same_shape(current_vertices.points, current_normals.points, "icp");
  if (params.levels < 1) throw InvalidArgument("icp", "levels must be >= 1");

  std::vector<VertexMap> cv{current_vertices};
  std::vector<NormalMap> cn{current_normals};
  std::vector<VertexMap> mv{model.vertices};
  std::vector<NormalMap> mn{model.normals};
  std::vector<CameraIntrinsics> k{intr};
  for (int l = 1; l < params.levels; ++l) {
    cv.push_back(detail::subsample(cv.back()));
    cn.push_back(detail::subsample(cn.back()));
    mv.push_back(detail::subsample(mv.back()));
    mn.push_back(detail::subsample(mn.back()));
    k.push_back(k.back().half());
  }

  IcpReport report;
  Pose relative = model.pose.inverse() * init;
  detail::NormalEquations eq;
  for (int l = params.levels - 1; l >= 0; --l) {
    const auto lvl = static_cast<std::size_t>(l);
    eq = detail::associate(cv[lvl], cn[lvl], mv[lvl], mn[lvl], k[lvl], relative,
                           params);
    std::vector<double> errors{eq.mean_squared_error()};
    for (int it = 0; it < params.max_iterations; ++it) {
      if (eq.count < params.min_inliers) {
        throw InsufficientInliers(
            "icp", std::to_string(eq.count) + " inliers at pyramid level " +
                       std::to_string(l) + ", need " +
                       std::to_string(params.min_inliers));
      }
      report.condition = detail::condition_number(eq.ata);
      if (report.condition > params.max_condition) {
        throw DegenerateGeometry(
            "icp", "normal-equations condition number " +
                       std::to_string(report.condition) + " exceeds " +
                       std::to_string(params.max_condition));
      }
      const Eigen::Matrix<double, 6, 1> xi = eq.ata.ldlt().solve(-eq.atb);
      ++report.iterations;
      const Pose candidate =
          (Pose::from_twist(xi.head<3>(), xi.tail<3>()) * relative)
              .orthonormalized();
      auto next = detail::associate(cv[lvl], cn[lvl], mv[lvl], mn[lvl], k[lvl],
                                    candidate, params);
      if (next.count < params.min_inliers ||
          next.mean_squared_error() > eq.mean_squared_error()) {
        break;
      }
      relative = candidate;
      eq = std::move(next);
      errors.push_back(eq.mean_squared_error());
      if (xi.norm() < params.step_tolerance) break;
    }
    report.level_errors.push_back(std::move(errors));
  }
  if (eq.count < params.min_inliers) {
    throw InsufficientInliers("icp", std::to_string(eq.count) +
                                         " inliers at the finest level");
  }
  report.pose = model.pose * relative;
  report.inliers = eq.count;
  report.residual = std::sqrt(eq.mean_squared_error());
  return report;
}

}  // namespace segfusion
