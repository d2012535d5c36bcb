#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segfusion/error.hpp"
#include "segfusion/grid.hpp"

namespace segfusion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Recognition output is produced at 1/8 of the image resolution.
inline constexpr int kPredictionStride = 8;

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Pinhole camera. The struct itself is a plain value so that pyramid levels
// can carry scaled copies; validate() enforces the full-resolution contract.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw InvalidArgument("intrinsics", "focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
      throw InvalidArgument("intrinsics", "image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
      throw InvalidArgument("intrinsics", "principal point outside the image");
    }
    if (width % kPredictionStride != 0 || height % kPredictionStride != 0) {
      throw InvalidArgument("intrinsics",
                            "image size must be divisible by 8, got " +
                                std::to_string(width) + "x" +
                                std::to_string(height));
    }
  }

  // Intrinsics of the image subsampled by taking every second pixel.
  CameraIntrinsics half() const {
    return {fx / 2.0, fy / 2.0, cx / 2.0, cy / 2.0, width / 2, height / 2};
  }

  friend bool operator==(const CameraIntrinsics&,
                         const CameraIntrinsics&) = default;
};

// Rigid-body transform in SE(3), mapping camera coordinates to world
// coordinates when used as a camera pose.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }

  // Quaternion in (x, y, z, w) component order, as in TUM trajectory files.
  static Pose from_tum(const Vec3& t, double qx, double qy, double qz,
                       double qw) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(q.norm() > 0.0) || !std::isfinite(q.norm())) {
      throw InvalidArgument("pose", "zero or non-finite quaternion");
    }
    q.normalize();
    return {q.toRotationMatrix(), t};
  }

  // Rotation by angle-axis vector `omega` (radians) followed by translation.
  static Pose from_twist(const Vec3& omega, const Vec3& translation) {
    const double angle = omega.norm();
    Mat3 r = Mat3::Identity();
    if (angle > 0.0) {
      r = Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
    }
    return {r, translation};
  }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(rotation_);
    q.normalize();
    return q;
  }

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& n) const { return rotation_ * n; }

  friend Pose operator*(const Pose& a, const Pose& b) {
    return {a.rotation_ * b.rotation_,
            a.rotation_ * b.translation_ + a.translation_};
  }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation_.allFinite() || !translation_.allFinite()) return false;
    const double ortho =
        (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
  }

  void validate() const {
    if (!is_valid()) {
      throw InvalidArgument("pose", "rotation is not orthonormal with det +1");
    }
  }

  // Projects the rotation back onto SO(3); used after accumulating many
  // incremental updates.
  Pose orthonormalized() const {
    Eigen::Quaterniond q(rotation_);
    q.normalize();
    return {q.toRotationMatrix(), translation_};
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

// Translation distance (meters) and rotation angle (radians) between poses.
inline std::pair<double, double> pose_error(const Pose& a, const Pose& b) {
  const Pose d = a.inverse() * b;
  return {d.translation().norm(), rotation_angle(d.rotation())};
}

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr double kDefaultMaxDepth = 8.0;

// Depth in meters; 0 marks an invalid measurement.
class DepthFrame {
 public:
  DepthFrame() = default;
  DepthFrame(int width, int height) : depth_(width, height, 0.0) {}

  // Validates values and invalidates anything beyond `max_depth`.
  static DepthFrame from_meters(Grid<double> depth,
                                double max_depth = kDefaultMaxDepth) {
    for (double& d : depth.data()) {
      if (!std::isfinite(d) || d < 0.0) {
        throw InvalidArgument("depth", "depth values must be finite and >= 0");
      }
      if (d > max_depth) d = 0.0;
    }
    DepthFrame f;
    f.depth_ = std::move(depth);
    return f;
  }

  int width() const noexcept { return depth_.width(); }
  int height() const noexcept { return depth_.height(); }
  double operator()(int x, int y) const { return depth_(x, y); }
  bool valid(int x, int y) const { return depth_(x, y) > 0.0; }
  const Grid<double>& grid() const noexcept { return depth_; }

 private:
  Grid<double> depth_;
};

class ColorFrame {
 public:
  ColorFrame() = default;
  explicit ColorFrame(Grid<Rgb> pixels) : pixels_(std::move(pixels)) {}

  int width() const noexcept { return pixels_.width(); }
  int height() const noexcept { return pixels_.height(); }
  const Rgb& operator()(int x, int y) const { return pixels_(x, y); }
  const Grid<Rgb>& grid() const noexcept { return pixels_; }

  void require_matches(const DepthFrame& depth) const {
    require_same_shape(pixels_, depth.grid(), "color");
  }

 private:
  Grid<Rgb> pixels_;
};

// Round half away from zero.
inline long round_pixel(double v) { return std::lround(v); }

// Pixel of a camera-frame point, or nullopt when behind the camera or outside
// [0, W) x [0, H).
inline std::optional<Pixel> project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) return std::nullopt;
  const double u = k.fx * p.x() / p.z() + k.cx;
  const double v = k.fy * p.y() / p.z() + k.cy;
  if (!std::isfinite(u) || !std::isfinite(v)) return std::nullopt;
  const long x = round_pixel(u);
  const long y = round_pixel(v);
  if (x < 0 || y < 0 || x >= k.width || y >= k.height) return std::nullopt;
  return Pixel{static_cast<int>(x), static_cast<int>(y)};
}

inline Vec3 backproject(Pixel px, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) {
    throw InvalidArgument("backproject", "depth must be positive");
  }
  return {depth * (px.x - k.cx) / k.fx, depth * (px.y - k.cy) / k.fy, depth};
}

// ---------------------------------------------------------------------------
// Class distributions

using ClassIndex = std::uint16_t;

inline constexpr double kDistributionTolerance = 1e-9;

// Scales `p` to sum 1. Returns false (leaving `p` untouched) when the sum is
// zero or not finite.
inline bool normalize(std::span<double> p) {
  double sum = 0.0;
  for (double v : p) sum += v;
  if (!(sum > 0.0) || !std::isfinite(sum)) return false;
  const double z = 1.0 / sum;
  for (double& v : p) v *= z;
  return true;
}

inline bool is_distribution(std::span<const double> p,
                            double tol = kDistributionTolerance) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0 + tol)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

// Smallest class index attaining the maximum, and that maximum.
inline std::pair<ClassIndex, double> argmax(std::span<const double> p) {
  ClassIndex best = 0;
  double best_value = p.empty() ? 0.0 : p[0];
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > best_value) {
      best_value = p[c];
      best = static_cast<ClassIndex>(c);
    }
  }
  return {best, best_value};
}

// Owning probability vector over N classes.
class ClassDistribution {
 public:
  ClassDistribution() = default;
  explicit ClassDistribution(std::vector<double> values)
      : values_(std::move(values)) {
    if (!segfusion::normalize(values_)) {
      throw InvalidArgument("distribution", "cannot normalize zero vector");
    }
  }

  static ClassDistribution uniform(int n) {
    ClassDistribution d;
    d.values_.assign(static_cast<std::size_t>(n), 1.0 / n);
    return d;
  }

  static ClassDistribution one_hot(int n, int c) {
    ClassDistribution d;
    d.values_.assign(static_cast<std::size_t>(n), 0.0);
    d.values_.at(static_cast<std::size_t>(c)) = 1.0;
    return d;
  }

  int size() const noexcept { return static_cast<int>(values_.size()); }
  double operator[](int c) const { return values_[static_cast<std::size_t>(c)]; }
  std::span<const double> values() const noexcept { return values_; }
  std::pair<ClassIndex, double> argmax() const {
    return segfusion::argmax(values_);
  }

 private:
  std::vector<double> values_;
};

}  // namespace segfusion
