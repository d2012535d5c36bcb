#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "segfusion/config.hpp"
#include "segfusion/pipeline.hpp"
#include "segfusion/semfusion.hpp"
#include "segfusion/synthetic.hpp"

namespace segfusion {

// A sweep over fusion strides (which sets N_s at fixed N_l) and class counts.
struct BenchmarkSuite {
  std::string scene = "cluttered_room";
  int width = 640;
  int height = 480;
  std::vector<int> strides = {1, 3, 10, 32};
  std::vector<int> classes = {13};
  int repeats = 20;
  std::uint64_t seed = 1;
};

struct BenchmarkRow {
  std::string scene;
  int stride = 1;
  std::size_t surfels = 0;  // N_s
  std::size_t labels = 0;   // N_l
  int num_classes = 0;      // N
  std::size_t filled_pixels = 0;
  double t_segment_ms = 0.0;   // median of overlaps + label update
  double t_baseline_ms = 0.0;  // median of the per-surfel update
  std::size_t bytes_segment = 0;
  std::size_t bytes_baseline = 0;
  double mean_labels_per_cell = 0.0;
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::istringstream word(item);
    std::string tok;
    while (word >> tok) out.push_back(parse_number<int>(key, tok));
  }
  if (out.empty()) throw InvalidArgument("benchmark", "empty list for " + key);
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// "key = value" lines: scene, width, height, strides, classes, repeats, seed.
inline BenchmarkSuite parse_benchmark_suite(std::istream& in,
                                            const std::string& name = "<suite>") {
  BenchmarkSuite suite;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = name + ":" + std::to_string(lineno);
    if (eq == std::string_view::npos) throw FormatError("benchmark", where + ": expected key = value");
    const std::string key(detail::trim(view.substr(0, eq)));
    const std::string value(detail::trim(view.substr(eq + 1)));
    try {
      if (key == "scene") suite.scene = value;
      else if (key == "width") suite.width = detail::parse_number<int>(key, value);
      else if (key == "height") suite.height = detail::parse_number<int>(key, value);
      else if (key == "strides") suite.strides = detail::parse_int_list(key, value);
      else if (key == "classes") suite.classes = detail::parse_int_list(key, value);
      else if (key == "repeats") suite.repeats = detail::parse_number<int>(key, value);
      else if (key == "seed") suite.seed = detail::parse_number<std::uint64_t>(key, value);
      else throw InvalidArgument("benchmark", "unknown key '" + key + "'");
    } catch (const InvalidArgument& e) {
      throw FormatError("benchmark", where + ": " + e.what());
    }
  }
  return suite;
}

inline BenchmarkSuite load_benchmark_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("benchmark", "cannot open " + path.string());
  return parse_benchmark_suite(in, path.string());
}

// Scene for one suite entry, with class ids folded into [0, N).
inline SceneSpec benchmark_scene(const BenchmarkSuite& suite, int num_classes) {
  auto spec = scenes::archetype(suite.scene, suite.width, suite.height, suite.seed);
  if (!spec) throw InvalidArgument("benchmark", "unknown scene '" + suite.scene + "'");
  spec->num_classes = num_classes;
  spec->seed = suite.seed;
  const auto fold = [&](ClassIndex c) { return static_cast<ClassIndex>(c % num_classes); };
  for (auto& p : spec->planes) p.class_id = fold(p.class_id);
  for (auto& b : spec->boxes) b.class_id = fold(b.class_id);
  return *spec;
}

// One frame through the pipeline at the given fusion stride, then the two
// probability updates timed on that frame's rendered label map.
inline BenchmarkRow run_benchmark_case(const BenchmarkSuite& suite, int stride,
                                       int num_classes) {
  if (suite.repeats < 1) throw InvalidArgument("benchmark", "repeats must be >= 1");
  const SceneSpec spec = benchmark_scene(suite, num_classes);
  const auto frames = generate_synthetic_scene(spec);
  const SyntheticFrame& f = frames.front();

  PipelineConfig config;
  config.num_classes = num_classes;
  config.fusion.stride = stride;
  config.baseline = true;
  Pipeline pipeline(spec.intrinsics, config);
  pipeline.process({0.0, f.depth, f.prediction, f.pose});

  const RenderedLabelMap rendered = render_label_map(pipeline.map(), f.pose, spec.intrinsics);
  LabelTable table = pipeline.labels();
  SurfelClassTable baseline = *pipeline.baseline();

  using Clock = std::chrono::steady_clock;
  std::vector<double> seg_ms, base_ms;
  double mean_u = 0.0;
  std::size_t filled = 0;
  for (int r = 0; r < suite.repeats; ++r) {
    auto t0 = Clock::now();
    const CellOverlapGrid overlaps = compute_cell_overlaps(rendered);
    update_label_probabilities(table, overlaps, f.prediction);
    seg_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    mean_u = overlaps.mean_labels_per_cell();

    t0 = Clock::now();
    filled = baseline_per_surfel_update(baseline, f.prediction, rendered);
    base_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }

  BenchmarkRow row;
  row.scene = suite.scene;
  row.stride = stride;
  row.surfels = pipeline.map().size();
  row.labels = table.live_count();
  row.num_classes = num_classes;
  row.filled_pixels = filled;
  row.t_segment_ms = detail::median(seg_ms);
  row.t_baseline_ms = detail::median(base_ms);
  row.bytes_segment = table.probability_bytes();
  row.bytes_baseline = baseline.probability_bytes();
  row.mean_labels_per_cell = mean_u;
  return row;
}

inline std::vector<BenchmarkRow> run_benchmark(const BenchmarkSuite& suite) {
  std::vector<BenchmarkRow> rows;
  for (int n : suite.classes) {
    for (int stride : suite.strides) rows.push_back(run_benchmark_case(suite, stride, n));
  }
  return rows;
}

// Probability storage of both methods for given counts, without running a map.
struct StorageFootprint {
  std::size_t bytes_segment = 0;
  std::size_t bytes_baseline = 0;
  double ratio() const {
    return bytes_baseline ? static_cast<double>(bytes_segment) / bytes_baseline : 0.0;
  }
};

inline StorageFootprint storage_footprint(std::size_t num_labels, std::size_t num_surfels,
                                          int num_classes) {
  LabelTable table(num_classes);
  for (std::size_t i = 0; i < num_labels; ++i) table.create();
  SurfelClassTable baseline(num_classes);
  baseline.resize(num_surfels);
  return {table.probability_bytes(), baseline.probability_bytes()};
}

inline void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "scene,stride,N_s,N_l,N,filled_pixels,t_segment_ms,t_baseline_ms,bytes_segment,"
         "bytes_baseline,mean_U_v\n"
      << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.scene << ',' << r.stride << ',' << r.surfels << ',' << r.labels << ','
        << r.num_classes << ',' << r.filled_pixels << ',' << r.t_segment_ms << ','
        << r.t_baseline_ms << ',' << r.bytes_segment << ',' << r.bytes_baseline << ','
        << r.mean_labels_per_cell << '\n';
  }
}

}  // namespace segfusion
