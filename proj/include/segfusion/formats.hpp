#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "segfusion/core.hpp"
#include "segfusion/image_io.hpp"
#include "segfusion/prediction.hpp"

namespace segfusion {

namespace binary {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void write(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read(std::istream& is, T& v) {
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) return false;
  v = to_little(v);
  return true;
}

}  // namespace binary

// ---------------------------------------------------------------------------
// SFPG prediction grids: "SFPG", u32 rows, u32 cols, u32 classes, then
// rows*cols*classes float32, row-major with the class index fastest. All
// values little-endian.

inline constexpr char kPredictionMagic[4] = {'S', 'F', 'P', 'G'};
inline constexpr double kPredictionSumTolerance = 1e-3;

inline PredictionGrid parse_prediction_grid(const std::string& bytes,
                                            const std::string& name = "<memory>") {
  std::istringstream is(bytes);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kPredictionMagic, 4) != 0) {
    throw FormatError("prediction", name + ": bad magic (expected SFPG)");
  }
  std::uint32_t rows = 0, cols = 0, classes = 0;
  if (!binary::read(is, rows) || !binary::read(is, cols) || !binary::read(is, classes)) {
    throw FormatError("prediction", name + ": truncated header");
  }
  if (rows == 0 || cols == 0 || classes < 2 || rows > 1u << 16 || cols > 1u << 16 ||
      classes > 1u << 15) {
    throw FormatError("prediction", name + ": implausible dimensions");
  }
  const std::uint64_t count = std::uint64_t{rows} * cols * classes;
  const std::uint64_t expected = 16 + count * 4;
  if (bytes.size() != expected) {
    throw FormatError("prediction", name + ": size mismatch (" +
                                        std::to_string(bytes.size()) + " bytes, expected " +
                                        std::to_string(expected) + ")");
  }
  PredictionGrid grid(static_cast<int>(cols), static_cast<int>(rows),
                      static_cast<int>(classes));
  auto& values = grid.values();
  for (std::uint64_t i = 0; i < count; ++i) {
    float f = 0.0f;
    binary::read(is, f);
    if (!std::isfinite(f) || f < 0.0f) {
      throw FormatError("prediction", name + ": non-finite or negative probability");
    }
    values[i] = f;
  }
  for (int t = 0; t < grid.rows(); ++t) {
    for (int s = 0; s < grid.cols(); ++s) {
      auto cell = grid.cell(s, t);
      double sum = 0.0;
      for (double v : cell) sum += v;
      if (std::abs(sum - 1.0) > kPredictionSumTolerance) {
        throw FormatError("prediction", name + ": cell (" + std::to_string(s) + "," +
                                            std::to_string(t) + ") sums to " +
                                            std::to_string(sum));
      }
      normalize(cell);
    }
  }
  return grid;
}

inline std::string read_file_bytes(const std::filesystem::path& path,
                                   const char* stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(stage, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline PredictionGrid load_prediction_grid(const std::filesystem::path& path) {
  return parse_prediction_grid(read_file_bytes(path, "prediction"), path.string());
}

inline std::string serialize_prediction_grid(const PredictionGrid& grid) {
  std::ostringstream os;
  os.write(kPredictionMagic, 4);
  binary::write(os, static_cast<std::uint32_t>(grid.rows()));
  binary::write(os, static_cast<std::uint32_t>(grid.cols()));
  binary::write(os, static_cast<std::uint32_t>(grid.num_classes()));
  for (double v : grid.values()) binary::write(os, static_cast<float>(v));
  return os.str();
}

inline void save_prediction_grid(const std::filesystem::path& path,
                                 const PredictionGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("prediction", "cannot write " + path.string());
  const std::string bytes = serialize_prediction_grid(grid);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("prediction", "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// TUM trajectories: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

inline std::string format_tum_pose(double timestamp, const Pose& pose) {
  const auto q = pose.quaternion();
  const Vec3& t = pose.translation();
  std::ostringstream os;
  os << std::setprecision(17) << timestamp << ' ' << t.x() << ' ' << t.y() << ' '
     << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
  return os.str();
}

inline void save_trajectory(const std::filesystem::path& path,
                            const std::vector<StampedPose>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("trajectory", "cannot write " + path.string());
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& p : poses) out << format_tum_pose(p.timestamp, p.pose) << '\n';
}

inline std::vector<StampedPose> load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("trajectory", "cannot open " + path.string());
  std::vector<StampedPose> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw FormatError("trajectory", path.string() + ":" + std::to_string(lineno) +
                                          ": expected 8 numbers");
    }
    out.push_back({ts, Pose::from_tum({tx, ty, tz}, qx, qy, qz, qw)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence manifests.
//
//   # comment
//   intrinsics <fx> <fy> <cx> <cy> <width> <height>
//   depth_scale <meters per raw unit>          (default 1/5000)
//   frame <timestamp> <depth.png> <color.png|-> <prediction.sfpg|-> [tx ty tz qx qy qz qw]
//
// Paths are relative to the manifest's directory.

inline constexpr double kDefaultDepthScale = 1.0 / 5000.0;

struct FrameEntry {
  double timestamp = 0.0;
  std::filesystem::path depth;
  std::optional<std::filesystem::path> color;
  std::optional<std::filesystem::path> prediction;
  std::optional<Pose> pose;
};

struct SequenceManifest {
  CameraIntrinsics intrinsics;
  double depth_scale = kDefaultDepthScale;
  std::vector<FrameEntry> frames;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
};

namespace detail {

inline std::optional<std::filesystem::path> optional_path(const std::string& token) {
  if (token == "-") return std::nullopt;
  return std::filesystem::path(token);
}

}  // namespace detail

inline SequenceManifest parse_manifest(std::istream& in,
                                       const std::filesystem::path& base_dir,
                                       const std::string& name = "<manifest>") {
  SequenceManifest m;
  m.base_dir = base_dir;
  bool have_intrinsics = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError("manifest", name + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "intrinsics") {
      auto& k = m.intrinsics;
      if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
        fail("intrinsics needs fx fy cx cy width height");
      }
      have_intrinsics = true;
    } else if (key == "depth_scale") {
      if (!(ls >> m.depth_scale) || !(m.depth_scale > 0.0)) {
        fail("depth_scale must be a positive number");
      }
    } else if (key == "frame") {
      FrameEntry f;
      std::string depth, color, pred;
      if (!(ls >> f.timestamp >> depth >> color >> pred)) {
        fail("frame needs timestamp depth color prediction");
      }
      f.depth = depth;
      f.color = detail::optional_path(color);
      f.prediction = detail::optional_path(pred);
      std::vector<double> pose;
      double v;
      while (ls >> v) pose.push_back(v);
      if (!ls.eof()) fail("unparseable pose value");
      if (!pose.empty()) {
        if (pose.size() != 7) fail("pose needs tx ty tz qx qy qz qw");
        try {
          f.pose = Pose::from_tum({pose[0], pose[1], pose[2]}, pose[3], pose[4],
                                  pose[5], pose[6]);
        } catch (const Error& e) {
          fail(e.what());
        }
      }
      if (!m.frames.empty() && !(f.timestamp > m.frames.back().timestamp)) {
        fail("timestamps must be strictly increasing");
      }
      m.frames.push_back(std::move(f));
    } else {
      fail("unknown directive '" + key + "'");
    }
  }
  if (!have_intrinsics) {
    throw FormatError("manifest", name + ": missing intrinsics line");
  }
  try {
    m.intrinsics.validate();
  } catch (const Error& e) {
    throw FormatError("manifest", name + ": " + e.what());
  }
  return m;
}

inline void write_manifest(std::ostream& out, const SequenceManifest& m) {
  const auto& k = m.intrinsics;
  out << "# segfusion sequence manifest\n" << std::setprecision(17);
  out << "intrinsics " << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' '
      << k.width << ' ' << k.height << '\n';
  out << "depth_scale " << m.depth_scale << '\n';
  for (const auto& f : m.frames) {
    out << "frame " << f.timestamp << ' ' << f.depth.generic_string() << ' '
        << (f.color ? f.color->generic_string() : "-") << ' '
        << (f.prediction ? f.prediction->generic_string() : "-");
    if (f.pose) {
      const std::string tum = format_tum_pose(0.0, *f.pose);
      out << tum.substr(tum.find(' '));
    }
    out << '\n';
  }
}

struct Frame {
  std::size_t index = 0;
  double timestamp = 0.0;
  DepthFrame depth;
  std::optional<ColorFrame> color;
  // Absent when the frame has no recognition result; segmentation is then
  // geometric-only for this frame.
  std::optional<PredictionGrid> prediction;
  std::optional<Pose> pose;
};

// Manifest plus lazy access to its frames.
class Sequence {
 public:
  Sequence(SequenceManifest manifest, double max_depth = kDefaultMaxDepth)
      : manifest_(std::move(manifest)), max_depth_(max_depth) {}

  const SequenceManifest& manifest() const noexcept { return manifest_; }
  const CameraIntrinsics& intrinsics() const noexcept { return manifest_.intrinsics; }
  std::size_t size() const noexcept { return manifest_.frames.size(); }

  Frame load(std::size_t i) const {
    const FrameEntry& e = manifest_.frames.at(i);
    const auto& k = manifest_.intrinsics;
    Frame f;
    f.index = i;
    f.timestamp = e.timestamp;
    f.pose = e.pose;
    const auto raw = read_png16(manifest_.resolve(e.depth));
    if (raw.width() != k.width || raw.height() != k.height) {
      throw FormatError("sequence", e.depth.string() + ": depth size " +
                                        std::to_string(raw.width()) + "x" +
                                        std::to_string(raw.height()) +
                                        " does not match intrinsics");
    }
    f.depth = depth_from_raw(raw, manifest_.depth_scale, max_depth_);
    if (e.color) {
      ColorFrame color(read_png_rgb(manifest_.resolve(*e.color)));
      color.require_matches(f.depth);
      f.color = std::move(color);
    }
    if (e.prediction) {
      auto grid = load_prediction_grid(manifest_.resolve(*e.prediction));
      if (!grid.matches(k)) {
        throw FormatError("sequence", e.prediction->string() +
                                          ": prediction grid is not (H/8)x(W/8)");
      }
      f.prediction = std::move(grid);
    }
    return f;
  }

  class iterator {
   public:
    using value_type = Frame;
    using difference_type = std::ptrdiff_t;
    iterator(const Sequence* seq, std::size_t i) : seq_(seq), i_(i) {}
    Frame operator*() const { return seq_->load(i_); }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const Sequence* seq_;
    std::size_t i_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }

 private:
  SequenceManifest manifest_;
  double max_depth_;
};

// Parses a manifest and checks that every referenced file exists.
inline Sequence load_sequence(const std::filesystem::path& manifest_path,
                              double max_depth = kDefaultMaxDepth) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("manifest", "cannot open " + manifest_path.string());
  SequenceManifest m = parse_manifest(in, manifest_path.parent_path(),
                                      manifest_path.string());
  for (const auto& f : m.frames) {
    for (const auto* p : {&f.depth, f.color ? &*f.color : nullptr,
                          f.prediction ? &*f.prediction : nullptr}) {
      if (p && !std::filesystem::exists(m.resolve(*p))) {
        throw IoError("manifest", "missing file " + m.resolve(*p).string());
      }
    }
  }
  return Sequence(std::move(m), max_depth);
}

}  // namespace segfusion
