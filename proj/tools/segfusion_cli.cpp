// segfusion command-line tool: run, bench, synth, export.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "segfusion/segfusion.hpp"

namespace fs = std::filesystem;
using namespace segfusion;

namespace {

std::ofstream open_output(const fs::path& path, const char* stage) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(stage, "cannot write " + path.string());
  return out;
}

PlyFormat parse_ply_format(const std::string& s) {
  if (s == "ascii") return PlyFormat::kAscii;
  if (s == "binary") return PlyFormat::kBinaryLittleEndian;
  throw InvalidArgument("export", "ply format must be ascii or binary");
}

// Adds --<key> for every config key; values are applied after the config file.
void add_config_overrides(CLI::App& cmd, std::map<std::string, std::string>& overrides) {
  for (const auto& key : config_keys()) {
    cmd.add_option_function<std::string>(
        "--" + key.name,
        [&overrides, name = key.name](const std::string& v) { overrides[name] = v; },
        key.help);
  }
}

PipelineConfig build_config(const std::string& config_path,
                            const std::map<std::string, std::string>& overrides) {
  PipelineConfig config;
  if (!config_path.empty()) config = load_config(config_path);
  for (const auto& [k, v] : overrides) set_config_value(config, k, v);
  config.validate();
  return config;
}

int cmd_run(const std::string& manifest, const std::string& config_path,
            const std::string& out_dir, const std::string& ply_format,
            const std::map<std::string, std::string>& overrides, bool quiet) {
  const PipelineConfig config = build_config(config_path, overrides);
  const PlyFormat format = parse_ply_format(ply_format);
  const Sequence sequence = load_sequence(manifest, config.max_depth);
  const fs::path out(out_dir);
  fs::create_directories(out);

  Pipeline pipeline(sequence.intrinsics(), config);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    Frame f;
    try {
      f = sequence.load(i);
    } catch (const Error& e) {
      throw PipelineError(i, e);
    }
    const auto& m =
        pipeline.process({f.timestamp, std::move(f.depth), std::move(f.prediction), f.pose});
    if (!quiet) {
      std::cerr << "frame " << m.frame << ": N_s=" << m.surfels << " N_l=" << m.labels
                << " segments=" << m.frame_segments << " fresh=" << m.fresh_labels
                << " merges=" << m.merges << '\n';
    }
  }

  save_snapshot(out / "map.sfm", pipeline.map(), pipeline.labels());
  if (!pipeline.map().empty()) export_ply(pipeline.map(), pipeline.labels(), out / "map.ply", format);
  save_trajectory(out / "trajectory.txt", pipeline.trajectory());
  {
    auto os = open_output(out / "metrics.csv", "run");
    write_metrics_csv(os, pipeline.metrics());
  }
  {
    auto os = open_output(out / "labels.csv", "run");
    write_labels_csv(os, pipeline.labels(), config.num_classes);
  }
  {
    auto os = open_output(out / "config.cfg", "run");
    write_config(os, config);
  }
  std::cout << "processed " << sequence.size() << " frames: " << pipeline.map().size()
            << " surfels, " << pipeline.labels().live_count() << " labels -> "
            << out.string() << '\n';
  return 0;
}

int cmd_bench(const std::string& suite_path, const std::string& csv_path) {
  const BenchmarkSuite suite =
      suite_path.empty() ? BenchmarkSuite{} : load_benchmark_suite(suite_path);
  const auto rows = run_benchmark(suite);
  if (csv_path.empty() || csv_path == "-") {
    write_benchmark_csv(std::cout, rows);
  } else {
    auto os = open_output(csv_path, "bench");
    write_benchmark_csv(os, rows);
    std::cout << "wrote " << rows.size() << " rows to " << csv_path << '\n';
  }
  return 0;
}

int cmd_synth(const std::string& scene_path, const std::string& archetype, int width,
              int height, const std::string& out_dir) {
  SceneSpec spec;
  if (!scene_path.empty()) {
    spec = load_scene_spec(scene_path);
  } else {
    auto a = scenes::archetype(archetype, width, height);
    if (!a) throw InvalidArgument("synth", "unknown archetype '" + archetype + "'");
    spec = *a;
  }
  const auto frames = generate_synthetic_scene(spec);
  const auto manifest = write_synthetic_sequence(spec, frames, out_dir);
  std::cout << "wrote " << frames.size() << " frames, manifest " << manifest.string() << '\n';
  return 0;
}

int cmd_export(const std::string& snapshot, const std::string& ply,
               const std::string& ply_format) {
  const PlyFormat format = parse_ply_format(ply_format);
  const MapSnapshot snap = load_snapshot(snapshot);
  export_ply(snap.map, snap.labels, ply, format);
  std::cout << "wrote " << snap.map.size() << " vertices to " << ply << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming RGB-D semantic mapping with segment-level class fusion"};
  app.require_subcommand(1);

  std::map<std::string, std::string> overrides;
  std::string manifest, config_path, out_dir = "out", ply_format = "binary";
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run the mapping pipeline on a sequence");
  run->add_option("manifest", manifest, "Sequence manifest")->required()->check(CLI::ExistingFile);
  run->add_option("-c,--config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
  run->add_option("-o,--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--ply-format", ply_format, "ascii or binary")->capture_default_str();
  run->add_flag("-q,--quiet", quiet, "No per-frame progress");
  add_config_overrides(*run, overrides);

  std::string suite_path, csv_path;
  auto* bench = app.add_subcommand("bench", "Benchmark segment vs per-surfel probability fusion");
  bench->add_option("suite", suite_path, "Suite file (defaults built in)")->check(CLI::ExistingFile);
  bench->add_option("-o,--csv", csv_path, "CSV output ('-' for stdout)");

  std::string scene_path, archetype = "painting_on_wall", synth_out;
  int width = 320, height = 240;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic sequence");
  auto* scene_opt = synth->add_option("scene", scene_path, "Scene description file")
                        ->check(CLI::ExistingFile);
  synth->add_option("-a,--archetype", archetype, "Built-in scene")->capture_default_str()->excludes(scene_opt);
  synth->add_option("--width", width, "Image width for --archetype")->capture_default_str();
  synth->add_option("--height", height, "Image height for --archetype")->capture_default_str();
  synth->add_option("-o,--out", synth_out, "Output directory")->required();

  std::string snapshot, ply_out;
  auto* exp = app.add_subcommand("export", "Export a map snapshot to PLY");
  exp->add_option("snapshot", snapshot, "Map snapshot (map.sfm)")->required()->check(CLI::ExistingFile);
  exp->add_option("ply", ply_out, "Output PLY")->required();
  exp->add_option("--ply-format", ply_format, "ascii or binary")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(manifest, config_path, out_dir, ply_format, overrides, quiet);
    if (*bench) return cmd_bench(suite_path, csv_path);
    if (*synth) return cmd_synth(scene_path, archetype, width, height, synth_out);
    if (*exp) return cmd_export(snapshot, ply_out, ply_format);
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [internal]: " << e.what() << '\n';
    return 4;
  }
  return 1;
}
