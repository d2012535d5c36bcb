#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "segfusion/core.hpp"
#include "segfusion/labels.hpp"
#include "segfusion/prediction.hpp"

namespace segfusion {

/// Class distribution and confidence for every live segment label.
///
/// Probabilities are stored per label, not per surfel, so the footprint is
/// N * N_l doubles regardless of how many surfels the map holds. Label ids are
/// dense indices into a slot vector; retiring a label frees its distribution.
class LabelTable {
 public:
  explicit LabelTable(int num_classes) : num_classes_(num_classes) {
    if (num_classes < 2) throw InvalidArgument("label_table", "need >= 2 classes");
  }

  int num_classes() const noexcept { return num_classes_; }
  LabelId next_id() const noexcept { return static_cast<LabelId>(slots_.size()); }
  std::size_t live_count() const noexcept { return live_; }

  /// Mints a label with a uniform distribution and zero confidence. With
  /// zero confidence the first update replaces the stored distribution, so
  /// the uniform value only matters for reads before that.
  LabelId create() {
    Record r;
    r.distribution.assign(static_cast<std::size_t>(num_classes_),
                          1.0 / num_classes_);
    r.live = true;
    slots_.push_back(std::move(r));
    ++live_;
    return static_cast<LabelId>(slots_.size() - 1);
  }

  bool contains(LabelId id) const noexcept {
    return id < slots_.size() && slots_[id].live;
  }

  std::span<const double> distribution(LabelId id) const {
    return record(id).distribution;
  }
  double confidence(LabelId id) const { return record(id).confidence; }
  std::size_t surfel_count(LabelId id) const { return record(id).surfels; }

  std::vector<LabelId> live_labels() const {
    std::vector<LabelId> out;
    out.reserve(live_);
    for (LabelId id = 0; id < slots_.size(); ++id) {
      if (slots_[id].live) out.push_back(id);
    }
    return out;
  }

  /// Number of distribution entries currently allocated.
  std::size_t probability_entries() const noexcept {
    std::size_t n = 0;
    for (const auto& r : slots_) n += r.distribution.size();
    return n;
  }

  /// Bytes holding fused class probabilities: distributions plus one
  /// confidence per live label.
  std::size_t probability_bytes() const noexcept {
    return (probability_entries() + live_) * sizeof(double);
  }

  void set_surfel_counts(std::span<const std::size_t> counts_by_label) {
    for (LabelId id = 0; id < slots_.size(); ++id) {
      slots_[id].surfels = id < counts_by_label.size() ? counts_by_label[id] : 0;
    }
  }

  // Raw access for the fusion kernels below.
  std::span<double> mutable_distribution(LabelId id) {
    return mutable_record(id).distribution;
  }
  double& mutable_confidence(LabelId id) { return mutable_record(id).confidence; }

  void retire(LabelId id) {
    Record& r = mutable_record(id);
    r.live = false;
    r.confidence = 0.0;
    r.surfels = 0;
    std::vector<double>().swap(r.distribution);
    --live_;
  }

 private:
  struct Record {
    std::vector<double> distribution;
    double confidence = 0.0;
    std::size_t surfels = 0;
    bool live = false;
  };

  const Record& record(LabelId id) const {
    if (!contains(id)) {
      throw UnknownLabel("label_table", "label " + std::to_string(id) + " is not live");
    }
    return slots_[id];
  }
  Record& mutable_record(LabelId id) {
    if (!contains(id)) {
      throw UnknownLabel("label_table", "label " + std::to_string(id) + " is not live");
    }
    return slots_[id];
  }

  int num_classes_;
  std::vector<Record> slots_;
  std::size_t live_ = 0;
};

// ---------------------------------------------------------------------------
// Per-cell label overlaps of a rendered label map.

struct LabelCount {
  LabelId label = kNoLabel;
  std::uint16_t count = 0;
  friend bool operator==(const LabelCount&, const LabelCount&) = default;
};

/// Filled-pixel count |C_v| and per-label counts |C_{v,l}| of one cell.
/// `labels` lists U_v in ascending label order.
struct CellOverlap {
  std::uint16_t filled = 0;
  std::span<const LabelCount> labels;
};

/// Overlaps of every 8x8 cell, stored flat: cell i owns
/// entries[offsets[i] .. offsets[i+1]).
class CellOverlapGrid {
 public:
  CellOverlapGrid() = default;
  CellOverlapGrid(int cols, int rows) : cols_(cols), rows_(rows) {
    filled_.assign(static_cast<std::size_t>(cols) * rows, 0);
    offsets_.assign(filled_.size() + 1, 0);
  }

  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }

  CellOverlap cell(int s, int t) const {
    const std::size_t i = static_cast<std::size_t>(t) * cols_ + s;
    return {filled_[i],
            std::span<const LabelCount>(entries_.data() + offsets_[i],
                                        offsets_[i + 1] - offsets_[i])};
  }

  /// Mean |U_v| over cells with at least one filled pixel (0 if none).
  double mean_labels_per_cell() const {
    std::size_t cells = 0;
    for (auto f : filled_) cells += f > 0;
    return cells ? static_cast<double>(entries_.size()) / cells : 0.0;
  }

  std::size_t total_entries() const noexcept { return entries_.size(); }

 private:
  friend CellOverlapGrid compute_cell_overlaps(const RenderedLabelMap& rendered);

  int cols_ = 0;
  int rows_ = 0;
  std::vector<std::uint16_t> filled_;
  std::vector<std::size_t> offsets_;
  std::vector<LabelCount> entries_;
};

/// Tallies each 8x8 block of the rendered map: one pass over its 64 pixels.
inline CellOverlapGrid compute_cell_overlaps(const RenderedLabelMap& rendered) {
  const int w = rendered.width();
  const int h = rendered.height();
  if (w % kPredictionStride != 0 || h % kPredictionStride != 0) {
    throw InvalidArgument("cell_overlaps", "label map size must be divisible by 8");
  }
  CellOverlapGrid grid(w / kPredictionStride, h / kPredictionStride);
  grid.entries_.reserve(grid.filled_.size());
  std::array<LabelCount, kPredictionStride * kPredictionStride> local{};
  std::size_t cell = 0;
  for (int t = 0; t < grid.rows_; ++t) {
    for (int s = 0; s < grid.cols_; ++s, ++cell) {
      std::size_t distinct = 0;
      std::uint16_t filled = 0;
      auto tally = [&](LabelId l, std::uint16_t n) {
        filled = static_cast<std::uint16_t>(filled + n);
        // Blocks rarely hold more than a couple of labels.
        std::size_t k = 0;
        while (k < distinct && local[k].label != l) ++k;
        if (k == distinct) local[distinct++] = {l, 0};
        local[k].count = static_cast<std::uint16_t>(local[k].count + n);
      };
      for (int dy = 0; dy < kPredictionStride; ++dy) {
        const LabelId* row =
            rendered.labels.row(t * kPredictionStride + dy).data() + s * kPredictionStride;
        // Whole 8-pixel runs of one label are the common case.
        if (std::all_of(row + 1, row + kPredictionStride,
                        [&](LabelId l) { return l == row[0]; })) {
          if (row[0] != kNoLabel) tally(row[0], kPredictionStride);
          continue;
        }
        for (int dx = 0; dx < kPredictionStride; ++dx) {
          if (row[dx] != kNoLabel) tally(row[dx], 1);
        }
      }
      std::sort(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(distinct),
                [](const LabelCount& a, const LabelCount& b) { return a.label < b.label; });
      grid.filled_[cell] = filled;
      grid.entries_.insert(grid.entries_.end(), local.begin(),
                           local.begin() + static_cast<std::ptrdiff_t>(distinct));
      grid.offsets_[cell + 1] = grid.entries_.size();
    }
  }
  return grid;
}

struct UpdateStats {
  std::size_t label_updates = 0;  // sum over cells of |U_v|
  std::size_t cells_used = 0;     // cells with |C_v| > 0
};

/// Confidence-weighted update of segment distributions from one frame.
///
/// For every cell v with filled pixels and every label l in U_v:
///   gamma = |C_{v,l}| / |C_v|
///   P_l   = normalize((Gamma_l * P_l + gamma * S(v)) / (Gamma_l + gamma))
///   Gamma_l += gamma
/// Cells are visited in row-major order, labels within a cell in ascending
/// id order. Work is 64 reads per cell (done by compute_cell_overlaps) plus
/// N per (cell, label) pair; surfels are never touched.
inline UpdateStats update_label_probabilities(LabelTable& table,
                                              const CellOverlapGrid& overlaps,
                                              const PredictionGrid& pred) {
  if (overlaps.cols() != pred.cols() || overlaps.rows() != pred.rows()) {
    throw InvalidArgument("label_update", "overlap grid and prediction grid differ in size");
  }
  if (pred.num_classes() != table.num_classes()) {
    throw InvalidArgument("label_update", "class count mismatch");
  }
  const auto n = static_cast<std::size_t>(table.num_classes());
  UpdateStats stats;
  for (int t = 0; t < overlaps.rows(); ++t) {
    for (int s = 0; s < overlaps.cols(); ++s) {
      const CellOverlap cell = overlaps.cell(s, t);
      if (cell.filled == 0) continue;
      ++stats.cells_used;
      const auto q = pred.cell(s, t);
      const double inv_filled = 1.0 / cell.filled;
      for (const LabelCount& lc : cell.labels) {
        auto p = table.mutable_distribution(lc.label);
        double& conf = table.mutable_confidence(lc.label);
        const double gamma = lc.count * inv_filled;
        const double inv_denom = 1.0 / (conf + gamma);
        for (std::size_t c = 0; c < n; ++c) {
          p[c] = (conf * p[c] + gamma * q[c]) * inv_denom;
        }
        normalize(p);
        conf += gamma;
        ++stats.label_updates;
      }
    }
  }
  return stats;
}

/// Applies merges in order. The survivor's distribution becomes the
/// confidence-weighted mean of both records and the confidences add.
inline void merge_label_records(LabelTable& table,
                                std::span<const MergeDirective> directives) {
  const auto n = static_cast<std::size_t>(table.num_classes());
  for (const MergeDirective& d : directives) {
    if (d.retired == d.survivor) {
      throw InvalidArgument("merge", "label " + std::to_string(d.retired) +
                                         " cannot be merged into itself");
    }
    if (!table.contains(d.retired) || !table.contains(d.survivor)) {
      throw UnknownLabel("merge", "directive " + std::to_string(d.retired) +
                                      " -> " + std::to_string(d.survivor) +
                                      " references a retired or unknown label");
    }
    const double ga = table.confidence(d.survivor);
    const double gb = table.confidence(d.retired);
    if (gb > 0.0) {
      auto pa = table.mutable_distribution(d.survivor);
      const auto pb = table.distribution(d.retired);
      for (std::size_t c = 0; c < n; ++c) pa[c] = ga * pa[c] + gb * pb[c];
      normalize(pa);
    }
    table.mutable_confidence(d.survivor) = ga + gb;
    table.retire(d.retired);
  }
}

/// Argmax class of a segment (lowest index on ties) and its probability.
inline std::pair<ClassIndex, double> query_segment_class(const LabelTable& table,
                                                         LabelId label) {
  return argmax(table.distribution(label));
}

// ---------------------------------------------------------------------------
// Per-surfel baseline: one distribution per map element, updated by
// multiplying in every observation.

class SurfelClassTable {
 public:
  explicit SurfelClassTable(int num_classes) : num_classes_(num_classes) {}

  int num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept {
    return values_.size() / static_cast<std::size_t>(num_classes_);
  }

  /// Grows to `surfel_count` entries; new surfels start uniform.
  void resize(std::size_t surfel_count) {
    values_.resize(surfel_count * static_cast<std::size_t>(num_classes_),
                   1.0 / num_classes_);
  }

  std::span<const double> distribution(SurfelId k) const {
    return {values_.data() + static_cast<std::size_t>(k) * num_classes_,
            static_cast<std::size_t>(num_classes_)};
  }
  std::span<double> distribution(SurfelId k) {
    return {values_.data() + static_cast<std::size_t>(k) * num_classes_,
            static_cast<std::size_t>(num_classes_)};
  }

  std::size_t probability_entries() const noexcept { return values_.size(); }
  std::size_t probability_bytes() const noexcept {
    return values_.size() * sizeof(double);
  }

 private:
  int num_classes_;
  std::vector<double> values_;
};

/// Multiplies the upsampled per-pixel likelihood into the distribution of the
/// surfel rendered at every pixel that shows one: H*W*N work per frame. When
/// the product vanishes (disjoint supports) the posterior restarts from the
/// likelihood.
inline std::size_t baseline_per_surfel_update(SurfelClassTable& table,
                                              const PredictionGrid& pred,
                                              const RenderedLabelMap& rendered) {
  if (pred.cols() * kPredictionStride != rendered.width() ||
      pred.rows() * kPredictionStride != rendered.height()) {
    throw InvalidArgument("baseline_update", "prediction grid does not match label map");
  }
  const auto n = static_cast<std::size_t>(table.num_classes());
  std::size_t updated = 0;
  for (int y = 0; y < rendered.height(); ++y) {
    const SurfelId* row = rendered.surfels.row(y).data();
    for (int x = 0; x < rendered.width(); ++x) {
      // Skip empty 8-pixel blocks without branching per pixel.
      if (x % kPredictionStride == 0) {
        SurfelId all = kNoSurfel;
        for (int i = 0; i < kPredictionStride; ++i) all &= row[x + i];
        if (all == kNoSurfel) {
          x += kPredictionStride - 1;
          continue;
        }
      }
      const SurfelId k = row[x];
      if (k == kNoSurfel) continue;
      auto p = table.distribution(k);
      const auto q = pred.at_pixel(x, y);
      for (std::size_t c = 0; c < n; ++c) p[c] *= q[c];
      if (!normalize(p)) std::copy(q.begin(), q.end(), p.begin());
      ++updated;
    }
  }
  return updated;
}

}  // namespace segfusion
