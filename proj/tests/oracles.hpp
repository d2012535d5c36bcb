#pragma once

// Independent reference implementations used to check the library. They are
// written for clarity, not speed, and share no code paths with the library
// beyond its plain data types.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "segfusion/segfusion.hpp"

namespace oracle {

using namespace segfusion;

inline std::filesystem::path temp_dir(const std::string& name) {
  const char* env = std::getenv("SEGFUSION_TEST_TMP");
  std::filesystem::path base = env ? env : std::filesystem::temp_directory_path() / "segfusion_tests";
  auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Segmentation

// Breadth-first 4-connected flood fill; returns component sizes in discovery
// order (row-major seed order) and per-pixel component index (-1 on edges).
struct Components {
  std::vector<std::size_t> sizes;
  std::vector<int> index;
};

inline Components flood_fill(const EdgeMap& edges) {
  const int w = edges.width(), h = edges.height();
  Components c;
  c.index.assign(static_cast<std::size_t>(w) * h, -1);
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (edges(x0, y0) != 0 || c.index[y0 * w + x0] != -1) continue;
      const int id = static_cast<int>(c.sizes.size());
      std::deque<std::pair<int, int>> queue{{x0, y0}};
      c.index[y0 * w + x0] = id;
      std::size_t size = 0;
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        ++size;
        for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (edges(nx, ny) != 0 || c.index[ny * w + nx] != -1) continue;
          c.index[ny * w + nx] = id;
          queue.emplace_back(nx, ny);
        }
      }
      c.sizes.push_back(size);
    }
  }
  return c;
}

// Pairs (p, q) with q one of the right, down or down-right neighbors of p and
// different classes.
inline std::size_t differing_forward_pairs(const ClassMap& s) {
  std::size_t n = 0;
  for (int y = 0; y < s.height(); ++y) {
    for (int x = 0; x < s.width(); ++x) {
      if (x + 1 < s.width() && s(x + 1, y) != s(x, y)) ++n;
      if (y + 1 < s.height() && s(x, y + 1) != s(x, y)) ++n;
      if (x + 1 < s.width() && y + 1 < s.height() && s(x + 1, y + 1) != s(x, y)) ++n;
    }
  }
  return n;
}

template <typename T>
Grid<T> rotate180(const Grid<T>& g) {
  Grid<T> out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      out(g.width() - 1 - x, g.height() - 1 - y) = g(x, y);
    }
  }
  return out;
}

// Eq. 3 evaluated literally: the max over the neighbor set of 1 - delta.
inline EdgeMap semantic_edges(const ClassMap& s) {
  EdgeMap out(s.width(), s.height(), 0);
  for (int y = 0; y < s.height(); ++y) {
    for (int x = 0; x < s.width(); ++x) {
      int m = 0;
      for (auto [dx, dy] : {std::pair{1, 0}, {0, 1}, {1, 1}}) {
        const int nx = x + dx, ny = y + dy;
        if (nx >= s.width() || ny >= s.height()) continue;
        m = std::max(m, s(nx, ny) == s(x, y) ? 0 : 1);
      }
      out(x, y) = static_cast<std::uint8_t>(m);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

// Per pixel, scan every surfel: nearest depth wins, lower index on ties.
inline RenderedLabelMap brute_force_render(const SurfelMap& map, const Pose& pose,
                                           const CameraIntrinsics& k) {
  RenderedLabelMap out(k.width, k.height);
  const Mat3 rt = pose.rotation().transpose();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < map.size(); ++i) {
        const Vec3 p = rt * (map[static_cast<SurfelId>(i)].position - pose.translation());
        if (!(p.z() > 0.0)) continue;
        const long u = std::lround(k.fx * p.x() / p.z() + k.cx);
        const long v = std::lround(k.fy * p.y() / p.z() + k.cy);
        if (u != x || v != y) continue;
        if (p.z() < best) {
          best = p.z();
          out.depth(x, y) = p.z();
          out.surfels(x, y) = static_cast<SurfelId>(i);
          out.labels(x, y) = map[static_cast<SurfelId>(i)].label;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segment probability fusion, with every set materialized.

struct LabelRecord {
  std::vector<double> p;
  double gamma = 0.0;
};

class SetFusionOracle {
 public:
  explicit SetFusionOracle(int n) : n_(n) {}

  std::map<LabelId, LabelRecord>& records() { return records_; }
  const std::map<LabelId, LabelRecord>& records() const { return records_; }

  void create(LabelId l) {
    records_[l] = {std::vector<double>(static_cast<std::size_t>(n_), 1.0 / n_), 0.0};
  }

  void merge(LabelId retired, LabelId survivor) {
    LabelRecord& a = records_.at(survivor);
    const LabelRecord b = records_.at(retired);
    if (b.gamma > 0.0) {
      double sum = 0.0;
      for (int c = 0; c < n_; ++c) {
        a.p[c] = a.gamma * a.p[c] + b.gamma * b.p[c];
        sum += a.p[c];
      }
      for (double& v : a.p) v /= sum;
    }
    a.gamma += b.gamma;
    records_.erase(retired);
  }

  // C_v: filled pixels of cell v. C_{v,l}: those showing l. U_v: labels seen.
  void update(const RenderedLabelMap& rendered, const PredictionGrid& pred) {
    for (int t = 0; t < pred.rows(); ++t) {
      for (int s = 0; s < pred.cols(); ++s) {
        std::set<std::pair<int, int>> c_v;
        std::map<LabelId, std::set<std::pair<int, int>>> c_vl;
        for (int y = 8 * t; y < 8 * t + 8; ++y) {
          for (int x = 8 * s; x < 8 * s + 8; ++x) {
            const LabelId l = rendered.labels(x, y);
            if (l == kNoLabel) continue;
            c_v.insert({x, y});
            c_vl[l].insert({x, y});
          }
        }
        std::set<LabelId> u_v;
        for (const auto& [l, pixels] : c_vl) u_v.insert(l);
        const auto q = pred.cell(s, t);
        for (LabelId l : u_v) {
          const double g = static_cast<double>(c_vl[l].size()) / static_cast<double>(c_v.size());
          LabelRecord& r = records_.at(l);
          std::vector<double> next(static_cast<std::size_t>(n_));
          double z = 0.0;
          for (int c = 0; c < n_; ++c) {
            next[c] = (r.gamma * r.p[c] + g * q[c]) / (r.gamma + g);
            z += next[c];
          }
          for (int c = 0; c < n_; ++c) r.p[c] = next[c] / z;
          r.gamma += g;
        }
      }
    }
  }

 private:
  int n_;
  std::map<LabelId, LabelRecord> records_;
};

// Largest absolute difference between the oracle and the table, or infinity
// when their live label sets differ.
inline double max_table_difference(const SetFusionOracle& o, const LabelTable& t) {
  const auto live = t.live_labels();
  if (live.size() != o.records().size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (LabelId l : live) {
    auto it = o.records().find(l);
    if (it == o.records().end()) return std::numeric_limits<double>::infinity();
    const auto p = t.distribution(l);
    for (std::size_t c = 0; c < p.size(); ++c) {
      worst = std::max(worst, std::abs(p[c] - it->second.p[c]));
    }
    worst = std::max(worst, std::abs(t.confidence(l) - it->second.gamma));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// PLY

struct PlyVertex {
  double x, y, z;
  float nx, ny, nz;
  std::uint32_t label;
  std::uint8_t r, g, b;
};

// Minimal reader for the vertex layout written by the library, driven by the
// header's property list.
inline std::vector<PlyVertex> read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line, format;
  std::size_t count = 0;
  std::vector<std::pair<std::string, std::string>> props;
  std::getline(in, line);
  if (line != "ply") throw std::runtime_error("not a ply file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") ls >> format;
    if (kw == "element") {
      std::string name;
      ls >> name >> count;
    }
    if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      props.emplace_back(type, name);
    }
  }
  std::vector<PlyVertex> out(count);
  auto read_binary = [&](const std::string& type, void* dst) {
    const std::size_t size = type == "double" ? 8 : (type == "float" || type == "uint") ? 4 : 1;
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(size));
    std::memcpy(dst, buf, size);  // little-endian host assumed by the tests
  };
  for (auto& v : out) {
    for (const auto& [type, name] : props) {
      void* dst = name == "x" ? static_cast<void*>(&v.x)
                : name == "y" ? static_cast<void*>(&v.y)
                : name == "z" ? static_cast<void*>(&v.z)
                : name == "nx" ? static_cast<void*>(&v.nx)
                : name == "ny" ? static_cast<void*>(&v.ny)
                : name == "nz" ? static_cast<void*>(&v.nz)
                : name == "label" ? static_cast<void*>(&v.label)
                : name == "red" ? static_cast<void*>(&v.r)
                : name == "green" ? static_cast<void*>(&v.g)
                : static_cast<void*>(&v.b);
      if (format == "ascii") {
        std::string tok;
        in >> tok;
        if (type == "double") *static_cast<double*>(dst) = std::stod(tok);
        else if (type == "float") *static_cast<float*>(dst) = std::stof(tok);
        else if (type == "uint") *static_cast<std::uint32_t*>(dst) = static_cast<std::uint32_t>(std::stoul(tok));
        else *static_cast<std::uint8_t*>(dst) = static_cast<std::uint8_t>(std::stoi(tok));
      } else {
        read_binary(type, dst);
      }
    }
  }
  if (!in) throw std::runtime_error("truncated ply body");
  return out;
}

// ---------------------------------------------------------------------------
// Random inputs

inline Pose random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_t = 2.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
  const double angle = max_angle * std::abs(u(rng));
  return Pose::from_twist(axis.normalized() * angle, Vec3(u(rng), u(rng), u(rng)) * max_t);
}

inline ClassMap random_class_map(std::mt19937_64& rng, int w, int h, int classes,
                                 double blockiness = 0.0) {
  ClassMap m(w, h, 0);
  std::uniform_int_distribution<int> c(0, classes - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x > 0 && u(rng) < blockiness) m(x, y) = m(x - 1, y);
      else if (y > 0 && u(rng) < blockiness) m(x, y) = m(x, y - 1);
      else m(x, y) = static_cast<ClassIndex>(c(rng));
    }
  }
  return m;
}

inline EdgeMap random_edge_map(std::mt19937_64& rng, int w, int h, double density) {
  EdgeMap e(w, h, 0);
  std::bernoulli_distribution b(density);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = b(rng) ? 1 : 0;
  return e;
}

}  // namespace oracle
