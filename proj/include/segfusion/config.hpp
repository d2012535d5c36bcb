#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "segfusion/geometry.hpp"
#include "segfusion/mapping.hpp"
#include "segfusion/segmentation.hpp"

namespace segfusion {

struct PipelineConfig {
  int num_classes = 13;
  double max_depth = kDefaultMaxDepth;

  EdgeThresholds edges;
  std::size_t min_segment_px = kDefaultMinSegmentPixels;
  PropagationParams propagation;
  IcpParams icp;
  FusionParams fusion;

  // Use manifest poses when a frame carries one; otherwise track with ICP.
  bool use_gt_poses = true;
  // Also run the per-surfel probability baseline every frame.
  bool baseline = false;
  // Skip semantic edges (ablation).
  bool geometric_only = false;
  // Run the recognition branch concurrently with the geometric branch.
  bool parallel_branches = true;

  void validate() const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidArgument("config", std::string(what) + " must be positive");
      }
    };
    if (num_classes < 2) throw InvalidArgument("config", "num_classes must be >= 2");
    positive(max_depth, "max_depth");
    positive(edges.max_normal_angle, "theta_max_deg");
    positive(edges.max_plane_distance, "delta_max");
    positive(static_cast<double>(min_segment_px), "min_segment_px");
    positive(propagation.min_propagate_ratio, "rho_prop");
    positive(propagation.min_merge_ratio, "rho_merge");
    positive(icp.max_distance, "icp_max_distance");
    positive(icp.max_angle, "icp_max_angle_deg");
    positive(icp.levels, "icp_levels");
    positive(icp.max_iterations, "icp_iterations");
    positive(static_cast<double>(icp.min_inliers), "icp_min_inliers");
    positive(icp.max_condition, "icp_max_condition");
    positive(fusion.max_distance, "fusion_max_distance");
    positive(fusion.max_angle, "fusion_max_angle_deg");
    positive(fusion.max_weight, "max_weight");
    positive(fusion.stride, "fusion_stride");
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("config", "bad value '" + std::string(text) + "' for " +
                                        std::string(key));
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw InvalidArgument("config", "bad boolean '" + std::string(text) + "' for " +
                                      std::string(key));
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

// Every tunable of the pipeline, by config-file key. Angles are in degrees.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_bool;
  using detail::parse_number;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  static const std::vector<ConfigKey> keys = {
      {"num_classes", "number of semantic classes N",
       [](PipelineConfig& c, std::string_view v) { c.num_classes = parse_number<int>("num_classes", v); },
       [](const PipelineConfig& c) { return std::to_string(c.num_classes); }},
      {"max_depth", "depth beyond this range (m) is invalid",
       [](PipelineConfig& c, std::string_view v) { c.max_depth = parse_number<double>("max_depth", v); },
       [num](const PipelineConfig& c) { return num(c.max_depth); }},
      {"theta_max_deg", "geometric edge normal-angle threshold (deg)",
       [](PipelineConfig& c, std::string_view v) { c.edges.max_normal_angle = deg2rad(parse_number<double>("theta_max_deg", v)); },
       [num](const PipelineConfig& c) { return num(rad2deg(c.edges.max_normal_angle)); }},
      {"delta_max", "geometric edge point-to-plane threshold (m)",
       [](PipelineConfig& c, std::string_view v) { c.edges.max_plane_distance = parse_number<double>("delta_max", v); },
       [num](const PipelineConfig& c) { return num(c.edges.max_plane_distance); }},
      {"min_segment_px", "smallest frame segment kept (pixels)",
       [](PipelineConfig& c, std::string_view v) { c.min_segment_px = parse_number<std::size_t>("min_segment_px", v); },
       [](const PipelineConfig& c) { return std::to_string(c.min_segment_px); }},
      {"rho_prop", "overlap share needed to propagate a label",
       [](PipelineConfig& c, std::string_view v) { c.propagation.min_propagate_ratio = parse_number<double>("rho_prop", v); },
       [num](const PipelineConfig& c) { return num(c.propagation.min_propagate_ratio); }},
      {"rho_merge", "overlap share each label needs to be merged",
       [](PipelineConfig& c, std::string_view v) { c.propagation.min_merge_ratio = parse_number<double>("rho_merge", v); },
       [num](const PipelineConfig& c) { return num(c.propagation.min_merge_ratio); }},
      {"icp_max_distance", "ICP association distance gate (m)",
       [](PipelineConfig& c, std::string_view v) { c.icp.max_distance = parse_number<double>("icp_max_distance", v); },
       [num](const PipelineConfig& c) { return num(c.icp.max_distance); }},
      {"icp_max_angle_deg", "ICP association normal gate (deg)",
       [](PipelineConfig& c, std::string_view v) { c.icp.max_angle = deg2rad(parse_number<double>("icp_max_angle_deg", v)); },
       [num](const PipelineConfig& c) { return num(rad2deg(c.icp.max_angle)); }},
      {"icp_levels", "ICP pyramid levels",
       [](PipelineConfig& c, std::string_view v) { c.icp.levels = parse_number<int>("icp_levels", v); },
       [](const PipelineConfig& c) { return std::to_string(c.icp.levels); }},
      {"icp_iterations", "Gauss-Newton iterations per level",
       [](PipelineConfig& c, std::string_view v) { c.icp.max_iterations = parse_number<int>("icp_iterations", v); },
       [](const PipelineConfig& c) { return std::to_string(c.icp.max_iterations); }},
      {"icp_min_inliers", "fewest associations ICP accepts",
       [](PipelineConfig& c, std::string_view v) { c.icp.min_inliers = parse_number<std::size_t>("icp_min_inliers", v); },
       [](const PipelineConfig& c) { return std::to_string(c.icp.min_inliers); }},
      {"icp_max_condition", "largest normal-equations condition number",
       [](PipelineConfig& c, std::string_view v) { c.icp.max_condition = parse_number<double>("icp_max_condition", v); },
       [num](const PipelineConfig& c) { return num(c.icp.max_condition); }},
      {"fusion_max_distance", "surfel association distance gate (m)",
       [](PipelineConfig& c, std::string_view v) { c.fusion.max_distance = parse_number<double>("fusion_max_distance", v); },
       [num](const PipelineConfig& c) { return num(c.fusion.max_distance); }},
      {"fusion_max_angle_deg", "surfel association normal gate (deg)",
       [](PipelineConfig& c, std::string_view v) { c.fusion.max_angle = deg2rad(parse_number<double>("fusion_max_angle_deg", v)); },
       [num](const PipelineConfig& c) { return num(rad2deg(c.fusion.max_angle)); }},
      {"max_weight", "surfel fusion weight cap",
       [](PipelineConfig& c, std::string_view v) { c.fusion.max_weight = parse_number<double>("max_weight", v); },
       [num](const PipelineConfig& c) { return num(c.fusion.max_weight); }},
      {"fusion_stride", "spawn new surfels every n-th row/column",
       [](PipelineConfig& c, std::string_view v) { c.fusion.stride = parse_number<int>("fusion_stride", v); },
       [](const PipelineConfig& c) { return std::to_string(c.fusion.stride); }},
      {"use_gt_poses", "use manifest poses instead of ICP when present",
       [](PipelineConfig& c, std::string_view v) { c.use_gt_poses = parse_bool("use_gt_poses", v); },
       [](const PipelineConfig& c) { return std::string(c.use_gt_poses ? "true" : "false"); }},
      {"baseline", "also run the per-surfel baseline update",
       [](PipelineConfig& c, std::string_view v) { c.baseline = parse_bool("baseline", v); },
       [](const PipelineConfig& c) { return std::string(c.baseline ? "true" : "false"); }},
      {"geometric_only", "skip semantic edges",
       [](PipelineConfig& c, std::string_view v) { c.geometric_only = parse_bool("geometric_only", v); },
       [](const PipelineConfig& c) { return std::string(c.geometric_only ? "true" : "false"); }},
      {"parallel_branches", "overlap recognition and geometry work",
       [](PipelineConfig& c, std::string_view v) { c.parallel_branches = parse_bool("parallel_branches", v); },
       [](const PipelineConfig& c) { return std::string(c.parallel_branches ? "true" : "false"); }},
  };
  return keys;
}

inline void set_config_value(PipelineConfig& config, std::string_view key,
                             std::string_view value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw InvalidArgument("config", "unknown key '" + std::string(key) + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// "key = value" lines; '#' starts a comment.
inline PipelineConfig parse_config(std::istream& in, PipelineConfig config = {},
                                   const std::string& name = "<config>") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config", name + ":" + std::to_string(lineno) +
                                      ": expected key = value");
    }
    try {
      set_config_value(config, detail::trim(view.substr(0, eq)),
                       detail::trim(view.substr(eq + 1)));
    } catch (const InvalidArgument& e) {
      throw FormatError("config", name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

inline PipelineConfig load_config(const std::filesystem::path& path,
                                  PipelineConfig config = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open " + path.string());
  return parse_config(in, std::move(config), path.string());
}

inline void write_config(std::ostream& out, const PipelineConfig& config) {
  for (const auto& k : config_keys()) {
    out << "# " << k.help << '\n' << k.name << " = " << k.get(config) << '\n';
  }
}

}  // namespace segfusion
