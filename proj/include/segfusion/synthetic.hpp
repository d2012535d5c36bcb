#pragma once

// Ray-cast scenes of axis-aligned rectangles and boxes with analytic depth,
// ground-truth classes, and recognition grids derived from those classes.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "segfusion/core.hpp"
#include "segfusion/formats.hpp"
#include "segfusion/geometry.hpp"
#include "segfusion/image_io.hpp"
#include "segfusion/palette.hpp"
#include "segfusion/prediction.hpp"

namespace segfusion {

// Rectangle on the plane {p : p[axis] = offset}. The bounds constrain the
// two remaining axes in increasing axis order (for axis y: x then z).
struct PlanePrimitive {
  int axis = 2;
  double offset = 1.0;
  double min_u = -std::numeric_limits<double>::infinity();
  double max_u = std::numeric_limits<double>::infinity();
  double min_v = -std::numeric_limits<double>::infinity();
  double max_v = std::numeric_limits<double>::infinity();
  ClassIndex class_id = 0;
};

struct BoxPrimitive {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  ClassIndex class_id = 0;
};

struct SceneSpec {
  CameraIntrinsics intrinsics{250.0, 250.0, 160.0, 120.0, 320, 240};
  int num_classes = 13;
  std::vector<PlanePrimitive> planes;
  std::vector<BoxPrimitive> boxes;

  int frames = 1;
  Pose start;
  // Per-frame camera increment, in the camera frame: rotation (angle-axis,
  // radians) then translation (meters).
  Vec3 motion_rotation = Vec3::Zero();
  Vec3 motion_translation = Vec3::Zero();
  // Explicit camera poses; overrides start/motion when non-empty.
  std::vector<Pose> trajectory;

  double noise = 0.0;     // probability a cell's class is replaced
  double softness = 0.0;  // mass spread uniformly over all classes
  std::uint64_t seed = 1;
  double depth_scale = kDefaultDepthScale;

  bool empty() const noexcept { return planes.empty() && boxes.empty(); }
};

struct SyntheticFrame {
  Pose pose;
  DepthFrame depth;
  PredictionGrid prediction;
  Grid<ClassIndex> gt_class;
  // Index of the primitive hit (planes first, then boxes); -1 for no hit.
  Grid<std::int32_t> gt_segment;
};

// Deterministic uniform draws from a 64-bit Mersenne twister; the
// std::*_distribution adaptors are implementation-defined.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

struct Hit {
  double depth = std::numeric_limits<double>::infinity();
  ClassIndex class_id = 0;
  std::int32_t primitive = -1;
};

inline void other_axes(int axis, int& a, int& b) {
  a = axis == 0 ? 1 : 0;
  b = axis == 2 ? 1 : 2;
}

inline void intersect_plane(const PlanePrimitive& pl, std::int32_t id,
                            const Vec3& origin, const Vec3& dir, Hit& hit) {
  const double d = dir[pl.axis];
  if (d == 0.0) return;
  const double t = (pl.offset - origin[pl.axis]) / d;
  if (!(t > 1e-9) || t > hit.depth) return;
  const Vec3 p = origin + t * dir;
  int a, b;
  other_axes(pl.axis, a, b);
  if (p[a] < pl.min_u || p[a] > pl.max_u || p[b] < pl.min_v || p[b] > pl.max_v) return;
  // Equal depth: the later primitive is painted on top.
  hit = {t, pl.class_id, id};
}

inline void intersect_box(const BoxPrimitive& box, std::int32_t id,
                          const Vec3& origin, const Vec3& dir, Hit& hit) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (dir[i] == 0.0) {
      if (origin[i] < box.min[i] || origin[i] > box.max[i]) return;
      continue;
    }
    double t0 = (box.min[i] - origin[i]) / dir[i];
    double t1 = (box.max[i] - origin[i]) / dir[i];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || !(t_near > 1e-9) || t_near > hit.depth) return;
  hit = {t_near, box.class_id, id};
}

}  // namespace detail

inline std::vector<Pose> scene_trajectory(const SceneSpec& spec) {
  if (!spec.trajectory.empty()) return spec.trajectory;
  std::vector<Pose> poses;
  Pose pose = spec.start;
  const Pose step = Pose::from_twist(spec.motion_rotation, spec.motion_translation);
  for (int i = 0; i < spec.frames; ++i) {
    poses.push_back(pose);
    pose = (pose * step).orthonormalized();
  }
  return poses;
}

// Analytic depth and per-pixel ground truth seen from `pose`. The camera ray
// of pixel u is R * (backproject(u, 1)), so the hit parameter is the depth.
inline SyntheticFrame render_scene(const SceneSpec& spec, const Pose& pose) {
  const auto& k = spec.intrinsics;
  Grid<double> depth(k.width, k.height, 0.0);
  SyntheticFrame f;
  f.pose = pose;
  f.gt_class = Grid<ClassIndex>(k.width, k.height, 0);
  f.gt_segment = Grid<std::int32_t>(k.width, k.height, -1);
  const auto n_planes = static_cast<std::int32_t>(spec.planes.size());
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir = pose.rotate(backproject({x, y}, 1.0, k));
      detail::Hit hit;
      for (std::int32_t i = 0; i < n_planes; ++i) {
        detail::intersect_plane(spec.planes[static_cast<std::size_t>(i)], i,
                                pose.translation(), dir, hit);
      }
      for (std::size_t i = 0; i < spec.boxes.size(); ++i) {
        detail::intersect_box(spec.boxes[i], n_planes + static_cast<std::int32_t>(i),
                              pose.translation(), dir, hit);
      }
      if (hit.primitive < 0) continue;
      depth(x, y) = hit.depth;
      f.gt_class(x, y) = hit.class_id;
      f.gt_segment(x, y) = hit.primitive;
    }
  }
  f.depth = DepthFrame::from_meters(std::move(depth), std::numeric_limits<double>::max());
  return f;
}

// Majority ground-truth class of each 8x8 block (lowest class on ties),
// ignoring pixels without a surface. Empty blocks yield -1.
inline Grid<int> cell_majority_classes(const SyntheticFrame& frame, int num_classes) {
  const int cols = frame.gt_class.width() / kPredictionStride;
  const int rows = frame.gt_class.height() / kPredictionStride;
  Grid<int> out(cols, rows, -1);
  std::vector<int> votes(static_cast<std::size_t>(num_classes));
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      std::fill(votes.begin(), votes.end(), 0);
      int total = 0;
      for (int dy = 0; dy < kPredictionStride; ++dy) {
        for (int dx = 0; dx < kPredictionStride; ++dx) {
          const int x = s * kPredictionStride + dx;
          const int y = t * kPredictionStride + dy;
          if (frame.gt_segment(x, y) < 0) continue;
          ++votes[frame.gt_class(x, y)];
          ++total;
        }
      }
      if (total == 0) continue;
      out(s, t) = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  }
  return out;
}

// Recognition grid from ground truth: each cell takes its majority class,
// replaced by a uniformly drawn other class with probability `noise`, then
// turned into (1 - softness) * one_hot + softness * uniform.
inline PredictionGrid predict_from_ground_truth(const SyntheticFrame& frame,
                                                const SceneSpec& spec, SceneRng& rng) {
  const int n = spec.num_classes;
  const auto majority = cell_majority_classes(frame, n);
  PredictionGrid grid(majority.width(), majority.height(), n);
  for (int t = 0; t < grid.rows(); ++t) {
    for (int s = 0; s < grid.cols(); ++s) {
      auto cell = grid.cell(s, t);
      int c = majority(s, t);
      if (c < 0) continue;  // no surface: stays uniform
      if (spec.noise > 0.0 && rng.uniform() < spec.noise) {
        const int shift = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
        c = (c + shift) % n;
      }
      for (int i = 0; i < n; ++i) {
        cell[static_cast<std::size_t>(i)] =
            spec.softness / n + (i == c ? 1.0 - spec.softness : 0.0);
      }
    }
  }
  return grid;
}

inline std::vector<SyntheticFrame> generate_synthetic_scene(const SceneSpec& spec) {
  if (spec.empty()) throw InvalidArgument("synthetic", "scene has no primitives");
  spec.intrinsics.validate();
  if (spec.num_classes < 2) throw InvalidArgument("synthetic", "need >= 2 classes");
  for (const auto& p : spec.planes) {
    if (p.axis < 0 || p.axis > 2 || p.class_id >= spec.num_classes) {
      throw InvalidArgument("synthetic", "plane has bad axis or class");
    }
  }
  for (const auto& b : spec.boxes) {
    if (b.class_id >= spec.num_classes || !(b.min.array() < b.max.array()).all()) {
      throw InvalidArgument("synthetic", "box has bad extent or class");
    }
  }
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0) ||
      !(spec.softness >= 0.0 && spec.softness <= 1.0)) {
    throw InvalidArgument("synthetic", "noise and softness must lie in [0, 1]");
  }
  if (spec.trajectory.empty() &&
      (spec.frames < 1 || !spec.motion_rotation.allFinite() ||
       !spec.motion_translation.allFinite())) {
    throw InvalidArgument("synthetic", "degenerate trajectory");
  }
  const auto poses = scene_trajectory(spec);
  SceneRng rng(spec.seed);
  std::vector<SyntheticFrame> frames;
  frames.reserve(poses.size());
  for (const Pose& pose : poses) {
    if (!pose.is_valid(1e-6)) throw InvalidArgument("synthetic", "degenerate trajectory");
    SyntheticFrame f = render_scene(spec, pose);
    f.prediction = predict_from_ground_truth(f, spec, rng);
    frames.push_back(std::move(f));
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Scene archetypes. The camera looks along +z with +y pointing down.

namespace scenes {

inline SceneSpec base(int width = 320, int height = 240) {
  SceneSpec s;
  const double f = 250.0 * width / 320.0;
  s.intrinsics = {f, f, width / 2.0, height / 2.0, width, height};
  return s;
}

inline PlanePrimitive plane(int axis, double offset, ClassIndex c) {
  PlanePrimitive p;
  p.axis = axis;
  p.offset = offset;
  p.class_id = c;
  return p;
}

inline PlanePrimitive rect(int axis, double offset, double min_u, double max_u,
                           double min_v, double max_v, ClassIndex c) {
  return {axis, offset, min_u, max_u, min_v, max_v, c};
}

// Fronto-parallel wall at `depth`.
inline SceneSpec single_plane(double depth = 1.0, int width = 320, int height = 240) {
  SceneSpec s = base(width, height);
  s.planes.push_back(plane(2, depth, classes::kWall));
  return s;
}

// Left half at `near`, right half at `far`, split at x = 0.
inline SceneSpec depth_step(double near = 1.0, double far = 2.0, int width = 320,
                            int height = 240) {
  SceneSpec s = base(width, height);
  const double inf = std::numeric_limits<double>::infinity();
  s.planes.push_back(rect(2, near, -inf, 0.0, -inf, inf, classes::kWall));
  s.planes.push_back(rect(2, far, 0.0, inf, -inf, inf, classes::kFurniture));
  return s;
}

// Concave 90 degree fold: back wall z = 2 meets side wall x = 0.5.
inline SceneSpec two_plane_corner(int width = 320, int height = 240) {
  SceneSpec s = base(width, height);
  const double inf = std::numeric_limits<double>::infinity();
  s.planes.push_back(rect(2, 2.0, -inf, 0.5, -inf, inf, classes::kWall));
  s.planes.push_back(rect(0, 0.5, -inf, inf, -inf, 2.0, classes::kWall));
  return s;
}

// Room corner: the two-plane fold standing on a floor at y = 0.6.
inline SceneSpec room_corner(int width = 320, int height = 240) {
  SceneSpec s = base(width, height);
  const double inf = std::numeric_limits<double>::infinity();
  s.planes.push_back(rect(2, 2.0, -inf, 0.5, -inf, 0.6, classes::kWall));
  s.planes.push_back(rect(0, 0.5, -inf, 0.6, -inf, 2.0, classes::kWall));
  s.planes.push_back(rect(1, 0.6, -inf, 0.5, -inf, 2.0, classes::kFloor));
  return s;
}

// A painting hung flush on a wall: the two regions are coplanar, so only the
// recognition result separates them.
inline SceneSpec painting_on_wall(int width = 320, int height = 240) {
  SceneSpec s = base(width, height);
  s.planes.push_back(plane(2, 2.0, classes::kWall));
  s.planes.push_back(rect(2, 2.0, -0.4, 0.3, -0.5, 0.1, classes::kPainting));
  return s;
}

// Wall, floor and side wall with furniture boxes and flush decals; used for
// benchmarking and randomized tests.
inline SceneSpec cluttered_room(std::uint64_t seed, int boxes = 6, int decals = 3,
                                int width = 320, int height = 240) {
  SceneSpec s = base(width, height);
  const double inf = std::numeric_limits<double>::infinity();
  s.planes.push_back(rect(2, 3.0, -inf, inf, -inf, 0.8, classes::kWall));
  s.planes.push_back(rect(1, 0.8, -inf, inf, -inf, 3.0, classes::kFloor));
  s.planes.push_back(rect(0, -1.6, -inf, 0.8, -inf, 3.0, classes::kWall));
  SceneRng rng(seed);
  static constexpr ClassIndex kBoxClasses[] = {classes::kBed, classes::kChair,
                                               classes::kFurniture, classes::kSofa,
                                               classes::kTable, classes::kTv,
                                               classes::kObjects};
  static constexpr ClassIndex kDecalClasses[] = {classes::kPainting, classes::kWindow,
                                                 classes::kTv};
  for (int i = 0; i < decals; ++i) {
    const double x0 = -1.4 + 2.4 * rng.uniform();
    const double y0 = -0.9 + 0.8 * rng.uniform();
    s.planes.push_back(rect(2, 3.0, x0, x0 + 0.3 + 0.3 * rng.uniform(), y0,
                            y0 + 0.25 + 0.25 * rng.uniform(),
                            kDecalClasses[rng.below(std::size(kDecalClasses))]));
  }
  for (int i = 0; i < boxes; ++i) {
    BoxPrimitive b;
    const double sx = 0.2 + 0.4 * rng.uniform();
    const double sy = 0.2 + 0.5 * rng.uniform();
    const double sz = 0.2 + 0.4 * rng.uniform();
    const double x = -1.4 + (2.6 - sx) * rng.uniform();
    const double z = 1.6 + (1.2 - sz) * rng.uniform();
    b.min = {x, 0.8 - sy, z};
    b.max = {x + sx, 0.8, z + sz};
    b.class_id = kBoxClasses[rng.below(std::size(kBoxClasses))];
    s.boxes.push_back(b);
  }
  return s;
}

inline std::optional<SceneSpec> archetype(const std::string& name, int width = 320,
                                          int height = 240, std::uint64_t seed = 1) {
  if (name == "single_plane") return single_plane(1.0, width, height);
  if (name == "depth_step") return depth_step(1.0, 2.0, width, height);
  if (name == "two_plane_corner") return two_plane_corner(width, height);
  if (name == "room_corner") return room_corner(width, height);
  if (name == "painting_on_wall") return painting_on_wall(width, height);
  if (name == "cluttered_room") return cluttered_room(seed, 6, 3, width, height);
  return std::nullopt;
}

}  // namespace scenes

// ---------------------------------------------------------------------------
// Scene description files.
//
//   size <width> <height>                  (sets default intrinsics)
//   intrinsics <fx> <fy> <cx> <cy> <width> <height>
//   archetype <name>                       (adds that archetype's primitives)
//   plane <x|y|z> <offset> <class> [min_u max_u min_v max_v]
//   box <minx> <miny> <minz> <maxx> <maxy> <maxz> <class>
//   classes <N>   frames <n>   noise <eps>   softness <s>   seed <n>
//   depth_scale <meters per unit>
//   camera <tx> <ty> <tz> <qx> <qy> <qz> <qw>
//   motion <tx> <ty> <tz> <rx_deg> <ry_deg> <rz_deg>
//   pose <tx> <ty> <tz> <qx> <qy> <qz> <qw>  (explicit trajectory, repeatable)

inline SceneSpec parse_scene_spec(std::istream& in, const std::string& name = "<scene>") {
  SceneSpec s = scenes::base();
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError("scene", name + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto axis_of = [&](const std::string& a) {
    if (a == "x") return 0;
    if (a == "y") return 1;
    if (a == "z") return 2;
    fail("axis must be x, y or z");
    return -1;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    bool ok = true;
    if (key == "size") {
      int w = 0, h = 0;
      ok = static_cast<bool>(ls >> w >> h);
      if (ok) s.intrinsics = scenes::base(w, h).intrinsics;
    } else if (key == "intrinsics") {
      auto& k = s.intrinsics;
      ok = static_cast<bool>(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height);
    } else if (key == "archetype") {
      std::string arch;
      ok = static_cast<bool>(ls >> arch);
      auto a = scenes::archetype(arch, s.intrinsics.width, s.intrinsics.height, s.seed);
      if (ok && !a) fail("unknown archetype '" + arch + "'");
      if (ok) {
        // Archetypes assume the default focal length for their size.
        s.planes.insert(s.planes.end(), a->planes.begin(), a->planes.end());
        s.boxes.insert(s.boxes.end(), a->boxes.begin(), a->boxes.end());
      }
    } else if (key == "plane") {
      std::string axis;
      PlanePrimitive p;
      int c = 0;
      ok = static_cast<bool>(ls >> axis >> p.offset >> c);
      if (ok) {
        p.axis = axis_of(axis);
        p.class_id = static_cast<ClassIndex>(c);
        double b[4];
        if (ls >> b[0] >> b[1] >> b[2] >> b[3]) {
          p.min_u = b[0];
          p.max_u = b[1];
          p.min_v = b[2];
          p.max_v = b[3];
        }
        s.planes.push_back(p);
      }
    } else if (key == "box") {
      BoxPrimitive b;
      int c = 0;
      ok = static_cast<bool>(ls >> b.min.x() >> b.min.y() >> b.min.z() >> b.max.x() >>
                             b.max.y() >> b.max.z() >> c);
      b.class_id = static_cast<ClassIndex>(c);
      if (ok) s.boxes.push_back(b);
    } else if (key == "classes") {
      ok = static_cast<bool>(ls >> s.num_classes);
    } else if (key == "frames") {
      ok = static_cast<bool>(ls >> s.frames);
    } else if (key == "noise") {
      ok = static_cast<bool>(ls >> s.noise);
    } else if (key == "softness") {
      ok = static_cast<bool>(ls >> s.softness);
    } else if (key == "seed") {
      ok = static_cast<bool>(ls >> s.seed);
    } else if (key == "depth_scale") {
      ok = static_cast<bool>(ls >> s.depth_scale) && s.depth_scale > 0.0;
    } else if (key == "camera" || key == "pose") {
      double v[7];
      ok = static_cast<bool>(ls >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5] >> v[6]);
      if (ok) {
        const Pose p = Pose::from_tum({v[0], v[1], v[2]}, v[3], v[4], v[5], v[6]);
        if (key == "camera") {
          s.start = p;
        } else {
          s.trajectory.push_back(p);
        }
      }
    } else if (key == "motion") {
      double v[6];
      ok = static_cast<bool>(ls >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5]);
      if (ok) {
        s.motion_translation = {v[0], v[1], v[2]};
        s.motion_rotation = {deg2rad(v[3]), deg2rad(v[4]), deg2rad(v[5])};
      }
    } else {
      fail("unknown directive '" + key + "'");
    }
    if (!ok) fail("malformed '" + key + "' line");
  }
  return s;
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("scene", "cannot open " + path.string());
  return parse_scene_spec(in, path.string());
}

// Writes depth PNGs, ground-truth color PNGs, prediction grids and a manifest
// with ground-truth poses into `dir`. Returns the manifest path.
inline std::filesystem::path write_synthetic_sequence(
    const SceneSpec& spec, const std::vector<SyntheticFrame>& frames,
    const std::filesystem::path& dir, double frame_interval = 1.0 / 30.0) {
  std::filesystem::create_directories(dir);
  SequenceManifest m;
  m.intrinsics = spec.intrinsics;
  m.depth_scale = spec.depth_scale;
  m.base_dir = dir;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::ostringstream stem;
    stem << std::setw(6) << std::setfill('0') << i;
    const auto& f = frames[i];
    FrameEntry e;
    e.timestamp = static_cast<double>(i) * frame_interval;
    e.depth = "depth/" + stem.str() + ".png";
    e.color = "color/" + stem.str() + ".png";
    e.prediction = "prediction/" + stem.str() + ".sfpg";
    e.pose = f.pose;
    std::filesystem::create_directories(dir / "depth");
    std::filesystem::create_directories(dir / "color");
    std::filesystem::create_directories(dir / "prediction");
    write_png16(dir / e.depth, depth_to_raw(f.depth, spec.depth_scale));
    Grid<Rgb> color(f.gt_class.width(), f.gt_class.height());
    for (std::size_t p = 0; p < color.size(); ++p) {
      color[p] = f.gt_segment[p] < 0 ? Rgb{} : class_color(f.gt_class[p]);
    }
    write_png_rgb(dir / *e.color, color);
    save_prediction_grid(dir / *e.prediction, f.prediction);
    m.frames.push_back(std::move(e));
  }
  const auto manifest_path = dir / "manifest.txt";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("synthetic", "cannot write " + manifest_path.string());
  write_manifest(out, m);
  return manifest_path;
}

}  // namespace segfusion
