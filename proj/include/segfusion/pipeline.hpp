#pragma once

#include <chrono>
#include <exception>
#include <cstddef>
#include <functional>
#include <future>
#include <optional>
#include <utility>
#include <vector>

#include "segfusion/config.hpp"
#include "segfusion/core.hpp"
#include "segfusion/formats.hpp"
#include "segfusion/geometry.hpp"
#include "segfusion/mapping.hpp"
#include "segfusion/segmentation.hpp"
#include "segfusion/semfusion.hpp"

namespace segfusion {

// A stage failure with the frame it happened on. The original exception is
// kept so callers can rethrow it to dispatch on its type.
class PipelineError : public Error {
 public:
  PipelineError(std::size_t frame, const Error& cause)
      : Error(cause.stage(), "frame " + std::to_string(frame) + ": " + cause.message()),
        frame_(frame),
        cause_(std::current_exception()) {}
  std::size_t frame() const noexcept { return frame_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  std::size_t frame_;
  std::exception_ptr cause_;
};

// Wall time of each stage in milliseconds. The recognition branch
// (semantic_edges) may overlap tracking through geometric_edges.
struct StageTimes {
  double tracking = 0.0;
  double vertex_normal = 0.0;
  double geometric_edges = 0.0;
  double semantic_edges = 0.0;
  double segmentation = 0.0;
  double render = 0.0;
  double propagation = 0.0;
  double fusion = 0.0;
  double overlaps = 0.0;
  double label_update = 0.0;
  double baseline = 0.0;
};

struct FrameMetrics {
  std::size_t frame = 0;
  double timestamp = 0.0;
  std::size_t surfels = 0;  // N_s
  std::size_t labels = 0;   // N_l
  std::size_t frame_segments = 0;
  std::size_t fresh_labels = 0;
  std::size_t merges = 0;
  double mean_labels_per_cell = 0.0;  // mean |U_v| over filled cells
  bool recognition = false;           // a prediction grid was fused
  StageTimes times;
  std::size_t bytes_segment = 0;
  std::size_t bytes_baseline = 0;  // 0 unless the baseline runs
};

struct FrameInput {
  double timestamp = 0.0;
  DepthFrame depth;
  std::optional<PredictionGrid> prediction;
  std::optional<Pose> pose;
};

// Intermediate products of one frame, handed to an optional observer.
struct FrameTrace {
  std::size_t frame = 0;
  const Pose& pose;
  const VertexMap& vertices;
  const NormalMap& normals;
  const EdgeMap& geometric_edges;
  const std::optional<EdgeMap>& semantic_edges;
  const EdgeMap& edges;
  const SegmentFrame& segments;
  const PropagationResult& propagation;
  const RenderedLabelMap& rendered;  // after fusion; input to the label update
  const std::optional<PredictionGrid>& prediction;
};

class Pipeline {
 public:
  using Observer = std::function<void(const FrameTrace&)>;

  Pipeline(const CameraIntrinsics& intrinsics, PipelineConfig config)
      : intr_(intrinsics), config_(std::move(config)), labels_(config_.num_classes) {
    intr_.validate();
    config_.validate();
    if (config_.baseline) baseline_.emplace(config_.num_classes);
  }

  void set_observer(Observer observer) { observer_ = std::move(observer); }

  const CameraIntrinsics& intrinsics() const noexcept { return intr_; }
  const PipelineConfig& config() const noexcept { return config_; }
  const SurfelMap& map() const noexcept { return map_; }
  const LabelTable& labels() const noexcept { return labels_; }
  const std::optional<SurfelClassTable>& baseline() const noexcept { return baseline_; }
  const std::vector<StampedPose>& trajectory() const noexcept { return trajectory_; }
  const std::vector<FrameMetrics>& metrics() const noexcept { return metrics_; }
  std::size_t frames_processed() const noexcept { return metrics_.size(); }

  const FrameMetrics& process(const FrameInput& input) {
    const std::size_t index = metrics_.size();
    try {
      return process_frame(index, input);
    } catch (const PipelineError&) {
      throw;
    } catch (const Error& e) {
      throw PipelineError(index, e);
    }
  }

  // Moves the results out; the pipeline is empty afterwards.
  SurfelMap take_map() { return std::move(map_); }
  LabelTable take_labels() { return std::move(labels_); }

 private:
  using Clock = std::chrono::steady_clock;

  static double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  }

  const FrameMetrics& process_frame(std::size_t index, const FrameInput& input) {
    if (input.depth.width() != intr_.width || input.depth.height() != intr_.height) {
      throw InvalidArgument("input", "depth frame does not match intrinsics");
    }
    if (input.prediction) {
      if (!input.prediction->matches(intr_)) {
        throw InvalidArgument("input", "prediction grid is not (H/8)x(W/8)");
      }
      if (input.prediction->num_classes() != config_.num_classes) {
        throw InvalidArgument("input", "prediction class count differs from num_classes");
      }
    }
    FrameMetrics m;
    m.frame = index;
    m.timestamp = input.timestamp;
    const DepthFrame depth = DepthFrame::from_meters(input.depth.grid(), config_.max_depth);

    // Recognition branch: class map -> median -> upsample -> semantic edges.
    const bool use_semantics = input.prediction && !config_.geometric_only;
    auto semantic_branch = [&]() -> std::pair<EdgeMap, double> {
      const auto t0 = Clock::now();
      EdgeMap bs = semantic_edge_map(
          upsample_nearest(median_filter_class_map(argmax_class_map(*input.prediction))));
      return {std::move(bs), ms_since(t0)};
    };
    std::future<std::pair<EdgeMap, double>> semantic_future;
    if (use_semantics && config_.parallel_branches) {
      semantic_future = std::async(std::launch::async, semantic_branch);
    }

    // Geometric branch.
    auto t0 = Clock::now();
    const VertexMap vmap = compute_vertex_map(depth, intr_);
    const NormalMap nmap = compute_normal_map(vmap);
    m.times.vertex_normal = ms_since(t0);

    t0 = Clock::now();
    const Pose pose = track(index, input, vmap, nmap);
    m.times.tracking = ms_since(t0);

    t0 = Clock::now();
    const EdgeMap bg = geometric_edge_map(vmap, nmap, config_.edges);
    m.times.geometric_edges = ms_since(t0);

    std::optional<EdgeMap> bs;
    if (use_semantics) {
      auto [edges, ms] = config_.parallel_branches ? semantic_future.get() : semantic_branch();
      bs = std::move(edges);
      m.times.semantic_edges = ms;
    }

    t0 = Clock::now();
    const EdgeMap edges = bs ? combine_edges(bg, *bs) : bg;
    const SegmentFrame segments = connected_components(edges, config_.min_segment_px);
    m.times.segmentation = ms_since(t0);
    m.frame_segments = segments.count();

    t0 = Clock::now();
    const RenderedLabelMap before = render_label_map(map_, pose, intr_);
    m.times.render = ms_since(t0);

    t0 = Clock::now();
    const PropagationResult propagation =
        propagate_labels(segments, before, labels_, config_.propagation);
    for (LabelId fresh : propagation.fresh) {
      if (labels_.create() != fresh) {
        throw InvalidArgument("propagation", "fresh label ids out of sequence");
      }
    }
    apply_merge_directives(map_, propagation.merges, labels_);
    merge_label_records(labels_, propagation.merges);
    const Grid<LabelId> pixel_labels = assign_pixel_labels(segments, propagation);
    m.times.propagation = ms_since(t0);
    m.fresh_labels = propagation.fresh.size();
    m.merges = propagation.merges.size();

    t0 = Clock::now();
    fuse_frame(map_, vmap, nmap, pixel_labels, pose, intr_, config_.fusion);
    labels_.set_surfel_counts(map_.label_histogram(labels_.next_id()));
    m.times.fusion = ms_since(t0);

    t0 = Clock::now();
    const RenderedLabelMap after = render_label_map(map_, pose, intr_);
    m.times.render += ms_since(t0);

    if (input.prediction) {
      m.recognition = true;
      t0 = Clock::now();
      const CellOverlapGrid overlaps = compute_cell_overlaps(after);
      m.times.overlaps = ms_since(t0);
      m.mean_labels_per_cell = overlaps.mean_labels_per_cell();

      t0 = Clock::now();
      update_label_probabilities(labels_, overlaps, *input.prediction);
      m.times.label_update = ms_since(t0);

      if (baseline_) {
        baseline_->resize(map_.size());
        t0 = Clock::now();
        baseline_per_surfel_update(*baseline_, *input.prediction, after);
        m.times.baseline = ms_since(t0);
      }
    } else if (baseline_) {
      baseline_->resize(map_.size());
    }

    m.surfels = map_.size();
    m.labels = labels_.live_count();
    m.bytes_segment = labels_.probability_bytes();
    m.bytes_baseline = baseline_ ? baseline_->probability_bytes() : 0;

    trajectory_.push_back({input.timestamp, pose});
    if (observer_) {
      observer_(FrameTrace{index, pose, vmap, nmap, bg, bs, edges, segments, propagation,
                           after, input.prediction});
    }
    metrics_.push_back(m);
    return metrics_.back();
  }

  Pose track(std::size_t index, const FrameInput& input, const VertexMap& vmap,
             const NormalMap& nmap) {
    if (input.pose && (config_.use_gt_poses || index == 0)) {
      input.pose->validate();
      return *input.pose;
    }
    if (index == 0 || map_.empty()) return Pose::identity();
    const Pose previous = trajectory_.back().pose;
    const ModelView model = render_model_view(map_, previous, intr_);
    return icp_point_to_plane(vmap, nmap, model, intr_, previous, config_.icp).pose;
  }

  CameraIntrinsics intr_;
  PipelineConfig config_;
  SurfelMap map_;
  LabelTable labels_;
  std::optional<SurfelClassTable> baseline_;
  std::vector<StampedPose> trajectory_;
  std::vector<FrameMetrics> metrics_;
  Observer observer_;
};

struct PipelineResult {
  SurfelMap map;
  LabelTable labels;
  std::vector<FrameMetrics> metrics;
  std::vector<StampedPose> trajectory;
};

inline PipelineResult run_pipeline(const Sequence& sequence, const PipelineConfig& config,
                                   Pipeline::Observer observer = {}) {
  Pipeline pipeline(sequence.intrinsics(), config);
  if (observer) pipeline.set_observer(std::move(observer));
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    Frame f;
    try {
      f = sequence.load(i);
    } catch (const Error& e) {
      throw PipelineError(i, e);
    }
    pipeline.process({f.timestamp, std::move(f.depth), std::move(f.prediction), f.pose});
  }
  auto metrics = pipeline.metrics();
  auto trajectory = pipeline.trajectory();
  return {pipeline.take_map(), pipeline.take_labels(), std::move(metrics),
          std::move(trajectory)};
}

}  // namespace segfusion
