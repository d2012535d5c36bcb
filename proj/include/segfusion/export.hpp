#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "segfusion/formats.hpp"
#include "segfusion/mapping.hpp"
#include "segfusion/palette.hpp"
#include "segfusion/pipeline.hpp"
#include "segfusion/semfusion.hpp"

namespace segfusion {

// Color of a surfel: the palette entry of its segment's argmax class, gray
// when the surfel has no segment or the segment has no evidence yet.
inline Rgb surfel_color(const Surfel& s, const LabelTable& table) {
  if (s.label == kNoLabel || !table.contains(s.label) || table.confidence(s.label) <= 0.0) {
    return kUnlabeledColor;
  }
  return class_color(query_segment_class(table, s.label).first);
}

enum class PlyFormat { kAscii, kBinaryLittleEndian };

// Vertex element: double x y z, float nx ny nz, uint label, uchar red green blue.
inline void write_ply(std::ostream& out, const SurfelMap& map, const LabelTable& table,
                      PlyFormat format = PlyFormat::kBinaryLittleEndian) {
  if (map.empty()) throw InvalidArgument("export_ply", "map has no surfels");
  out << "ply\n"
      << (format == PlyFormat::kAscii ? "format ascii 1.0\n"
                                      : "format binary_little_endian 1.0\n")
      << "comment segfusion surfel map\n"
      << "element vertex " << map.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n"
      << "property float nx\nproperty float ny\nproperty float nz\n"
      << "property uint label\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  if (format == PlyFormat::kAscii) out << std::setprecision(17);
  for (const Surfel& s : map.surfels()) {
    const Rgb c = surfel_color(s, table);
    const auto n = s.normal.cast<float>();
    if (format == PlyFormat::kAscii) {
      out << s.position.x() << ' ' << s.position.y() << ' ' << s.position.z() << ' '
          << std::setprecision(9) << n.x() << ' ' << n.y() << ' ' << n.z() << ' '
          << std::setprecision(17) << s.label << ' ' << int{c.r} << ' ' << int{c.g} << ' '
          << int{c.b} << '\n';
    } else {
      binary::write(out, s.position.x());
      binary::write(out, s.position.y());
      binary::write(out, s.position.z());
      binary::write(out, n.x());
      binary::write(out, n.y());
      binary::write(out, n.z());
      binary::write(out, s.label);
      binary::write(out, c.r);
      binary::write(out, c.g);
      binary::write(out, c.b);
    }
  }
  if (!out) throw IoError("export_ply", "write failed");
}

inline void export_ply(const SurfelMap& map, const LabelTable& table,
                       const std::filesystem::path& path,
                       PlyFormat format = PlyFormat::kBinaryLittleEndian) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("export_ply", "cannot write " + path.string());
  write_ply(out, map, table, format);
}

// ---------------------------------------------------------------------------
// Map snapshots ("SFMS", version 1), little-endian:
//   u32 num_classes, u64 surfel_count,
//   per surfel: f64 px py pz nx ny nz radius weight, u32 label
//   u64 label_slots, per slot: u8 live, and when live:
//     f64 confidence, u64 surfel_count, num_classes x f64 distribution

inline constexpr char kSnapshotMagic[4] = {'S', 'F', 'M', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct MapSnapshot {
  SurfelMap map;
  LabelTable labels;
};

inline void write_snapshot(std::ostream& out, const SurfelMap& map, const LabelTable& table) {
  out.write(kSnapshotMagic, 4);
  binary::write(out, kSnapshotVersion);
  binary::write(out, static_cast<std::uint32_t>(table.num_classes()));
  binary::write(out, static_cast<std::uint64_t>(map.size()));
  for (const Surfel& s : map.surfels()) {
    for (int i = 0; i < 3; ++i) binary::write(out, s.position[i]);
    for (int i = 0; i < 3; ++i) binary::write(out, s.normal[i]);
    binary::write(out, s.radius);
    binary::write(out, s.weight);
    binary::write(out, s.label);
  }
  binary::write(out, static_cast<std::uint64_t>(table.next_id()));
  for (LabelId id = 0; id < table.next_id(); ++id) {
    const bool live = table.contains(id);
    binary::write(out, static_cast<std::uint8_t>(live));
    if (!live) continue;
    binary::write(out, table.confidence(id));
    binary::write(out, static_cast<std::uint64_t>(table.surfel_count(id)));
    for (double p : table.distribution(id)) binary::write(out, p);
  }
  if (!out) throw IoError("snapshot", "write failed");
}

inline MapSnapshot read_snapshot(std::istream& in, const std::string& name = "<snapshot>") {
  auto fail = [&](const std::string& msg) -> void {
    throw FormatError("snapshot", name + ": " + msg);
  };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kSnapshotMagic, 4) != 0) fail("bad magic");
  std::uint32_t version = 0, classes = 0;
  std::uint64_t surfels = 0;
  if (!binary::read(in, version) || version != kSnapshotVersion) fail("unsupported version");
  if (!binary::read(in, classes) || classes < 2) fail("bad class count");
  if (!binary::read(in, surfels)) fail("truncated");
  MapSnapshot snap{SurfelMap{}, LabelTable(static_cast<int>(classes))};
  for (std::uint64_t i = 0; i < surfels; ++i) {
    Surfel s;
    bool ok = true;
    for (int k = 0; k < 3; ++k) ok = ok && binary::read(in, s.position[k]);
    for (int k = 0; k < 3; ++k) ok = ok && binary::read(in, s.normal[k]);
    ok = ok && binary::read(in, s.radius) && binary::read(in, s.weight) &&
         binary::read(in, s.label);
    if (!ok) fail("truncated surfel data");
    snap.map.add(s);
  }
  std::uint64_t slots = 0;
  if (!binary::read(in, slots)) fail("truncated label table");
  std::vector<std::size_t> counts(slots, 0);
  std::vector<LabelId> dead;
  for (std::uint64_t id = 0; id < slots; ++id) {
    std::uint8_t live = 0;
    if (!binary::read(in, live)) fail("truncated label table");
    const LabelId l = snap.labels.create();
    if (!live) {
      dead.push_back(l);
      continue;
    }
    std::uint64_t count = 0;
    if (!binary::read(in, snap.labels.mutable_confidence(l)) || !binary::read(in, count)) {
      fail("truncated label record");
    }
    counts[id] = count;
    for (double& p : snap.labels.mutable_distribution(l)) {
      if (!binary::read(in, p)) fail("truncated label record");
    }
  }
  for (LabelId l : dead) snap.labels.retire(l);
  snap.labels.set_surfel_counts(counts);
  for (const Surfel& s : snap.map.surfels()) {
    if (s.label != kNoLabel && !snap.labels.contains(s.label)) {
      fail("surfel references unknown label " + std::to_string(s.label));
    }
  }
  return snap;
}

inline void save_snapshot(const std::filesystem::path& path, const SurfelMap& map,
                          const LabelTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("snapshot", "cannot write " + path.string());
  write_snapshot(out, map, table);
}

inline MapSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("snapshot", "cannot open " + path.string());
  return read_snapshot(in, path.string());
}

// ---------------------------------------------------------------------------
// CSV reports

inline void write_metrics_csv(std::ostream& out, const std::vector<FrameMetrics>& metrics) {
  out << "frame,timestamp,N_s,N_l,frame_segments,fresh_labels,merges,mean_U_v,"
         "recognition,t_tracking_ms,t_vertex_normal_ms,t_geometric_edges_ms,"
         "t_semantic_edges_ms,t_segmentation_ms,t_render_ms,t_propagation_ms,"
         "t_fusion_ms,t_overlaps_ms,t_label_update_ms,t_baseline_ms,bytes_segment,"
         "bytes_baseline\n";
  out << std::setprecision(9);
  for (const auto& m : metrics) {
    const auto& t = m.times;
    out << m.frame << ',' << m.timestamp << ',' << m.surfels << ',' << m.labels << ','
        << m.frame_segments << ',' << m.fresh_labels << ',' << m.merges << ','
        << m.mean_labels_per_cell << ',' << (m.recognition ? 1 : 0) << ',' << t.tracking
        << ',' << t.vertex_normal << ',' << t.geometric_edges << ',' << t.semantic_edges
        << ',' << t.segmentation << ',' << t.render << ',' << t.propagation << ','
        << t.fusion << ',' << t.overlaps << ',' << t.label_update << ',' << t.baseline
        << ',' << m.bytes_segment << ',' << m.bytes_baseline << '\n';
  }
}

inline void write_labels_csv(std::ostream& out, const LabelTable& table, int num_names = 0) {
  out << "label,class,class_name,probability,confidence,surfels\n" << std::setprecision(9);
  for (LabelId id : table.live_labels()) {
    const auto [c, p] = query_segment_class(table, id);
    out << id << ',' << c << ','
        << (c < num_names && c < classes::kNames.size() ? classes::kNames[c] : "") << ','
        << p << ',' << table.confidence(id) << ',' << table.surfel_count(id) << '\n';
  }
}

}  // namespace segfusion
