#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace segfusion;

namespace {

const CameraIntrinsics kSmall{40.0, 40.0, 16.0, 12.0, 32, 24};

struct Frame {
  VertexMap v;
  NormalMap n;
  Grid<LabelId> labels;
};

// Fronto-parallel plane at `depth`, every pixel valid, facing the camera.
Frame plane_frame(double depth, LabelId label = kNoLabel) {
  Frame f{VertexMap(kSmall.width, kSmall.height), NormalMap(kSmall.width, kSmall.height),
          Grid<LabelId>(kSmall.width, kSmall.height, label)};
  for (int y = 0; y < kSmall.height; ++y) {
    for (int x = 0; x < kSmall.width; ++x) {
      f.v.set(x, y, backproject({x, y}, depth, kSmall));
      f.n.set(x, y, Vec3(0, 0, -1));
    }
  }
  return f;
}

}  // namespace

TEST(Render, EmptyMapIsAllUnfilled) {
  const auto r = render_label_map(SurfelMap{}, Pose::identity(), kSmall);
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    ASSERT_EQ(r.labels[i], kNoLabel);
    ASSERT_EQ(r.surfels[i], kNoSurfel);
  }
}

TEST(Render, SurfelOnAxisLandsOnPrincipalPoint) {
  SurfelMap m;
  m.add({Vec3(0, 0, 2), Vec3(0, 0, -1), 0.01, 1.0, 4});
  const auto r = render_label_map(m, Pose::identity(), kSmall);
  EXPECT_EQ(r.labels(16, 12), 4u);
  EXPECT_EQ(r.surfels(16, 12), 0u);
  EXPECT_DOUBLE_EQ(r.depth(16, 12), 2.0);
  std::size_t filled = 0;
  for (auto l : r.labels.data()) filled += l != kNoLabel;
  EXPECT_EQ(filled, 1u);
}

TEST(Render, NearerSurfelOnSameRayWins) {
  SurfelMap m;
  m.add({Vec3(0, 0, 3), Vec3(0, 0, -1), 0.01, 1.0, 1});
  m.add({Vec3(0, 0, 1), Vec3(0, 0, -1), 0.01, 1.0, 2});
  m.add({Vec3(0, 0, 1), Vec3(0, 0, -1), 0.01, 1.0, 3});  // tie: lower id stays
  const auto r = render_label_map(m, Pose::identity(), kSmall);
  EXPECT_EQ(r.labels(16, 12), 2u);
  EXPECT_EQ(r.surfels(16, 12), 1u);
}

TEST(Render, MatchesBruteForceOnRandomMaps) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0), z(0.2, 4.0);
  for (int trial = 0; trial < 40; ++trial) {
    SurfelMap m;
    const int count = 50 + trial * 10;
    for (int i = 0; i < count; ++i) {
      // Coarse coordinates make pixel and depth collisions common.
      const Vec3 p(std::round(u(rng) * 8) / 4, std::round(u(rng) * 8) / 4, std::round(z(rng) * 4) / 4);
      m.add({p, Vec3(0, 0, -1), 0.01, 1.0, static_cast<LabelId>(i % 7)});
    }
    const Pose pose = oracle::random_pose(rng, 0.3, 0.5);
    const auto got = render_label_map(m, pose, kSmall);
    const auto want = oracle::brute_force_render(m, pose, kSmall);
    ASSERT_EQ(got.surfels, want.surfels) << "trial " << trial;
    ASSERT_EQ(got.labels, want.labels);
  }
}

TEST(Fuse, EmptyMapSpawnsOneSurfelPerPixel) {
  SurfelMap m;
  const auto f = plane_frame(1.0, 5);
  const auto st = fuse_frame(m, f.v, f.n, f.labels, Pose::identity(), kSmall);
  EXPECT_EQ(st.created, 32u * 24u);
  EXPECT_EQ(st.updated, 0u);
  ASSERT_EQ(m.size(), 32u * 24u);
  for (const Surfel& s : m.surfels()) {
    EXPECT_EQ(s.weight, 1.0);
    EXPECT_EQ(s.label, 5u);
  }
}

TEST(Fuse, RefusingSameFrameUpdatesInPlace) {
  SurfelMap m;
  const auto f = plane_frame(1.0, 5);
  fuse_frame(m, f.v, f.n, f.labels, Pose::identity(), kSmall);
  const auto st = fuse_frame(m, f.v, f.n, f.labels, Pose::identity(), kSmall);
  EXPECT_EQ(st.created, 0u);
  EXPECT_EQ(st.updated, 32u * 24u);
  ASSERT_EQ(m.size(), 32u * 24u);
  for (const Surfel& s : m.surfels()) EXPECT_EQ(s.weight, 2.0);
}

TEST(Fuse, WeightedMeanAndUnitNormals) {
  SurfelMap m;
  const auto a = plane_frame(1.0);
  fuse_frame(m, a.v, a.n, a.labels, Pose::identity(), kSmall);
  fuse_frame(m, a.v, a.n, a.labels, Pose::identity(), kSmall);
  fuse_frame(m, a.v, a.n, a.labels, Pose::identity(), kSmall);
  // Weight 3 now; fuse a frame 2 cm further with tilted normals.
  auto b = plane_frame(1.02);
  const Vec3 tilted = Vec3(0.2, 0, -1).normalized();
  for (int y = 0; y < kSmall.height; ++y) {
    for (int x = 0; x < kSmall.width; ++x) b.n.set(x, y, tilted);
  }
  const Vec3 p_before = m[0].position;
  const Vec3 p_new = b.v(0, 0);
  fuse_frame(m, b.v, b.n, b.labels, Pose::identity(), kSmall);
  EXPECT_EQ(m.size(), 32u * 24u);
  EXPECT_LE((m[0].position - (3.0 * p_before + p_new) / 4.0).norm(), 1e-12);
  for (const Surfel& s : m.surfels()) {
    ASSERT_NEAR(s.normal.norm(), 1.0, 1e-12);
    ASSERT_EQ(s.weight, 4.0);
  }
}

TEST(Fuse, WeightIsCapped) {
  SurfelMap m;
  const auto f = plane_frame(1.0);
  FusionParams p;
  p.max_weight = 3.0;
  for (int i = 0; i < 6; ++i) fuse_frame(m, f.v, f.n, f.labels, Pose::identity(), kSmall, p);
  for (const Surfel& s : m.surfels()) ASSERT_EQ(s.weight, 3.0);
}

TEST(Fuse, FarObservationSpawnsAndStrideThins) {
  SurfelMap m;
  const auto near = plane_frame(1.0);
  fuse_frame(m, near.v, near.n, near.labels, Pose::identity(), kSmall);
  const auto far = plane_frame(1.5);
  FusionParams p;
  p.stride = 4;
  const auto st = fuse_frame(m, far.v, far.n, far.labels, Pose::identity(), kSmall, p);
  EXPECT_EQ(st.updated, 0u);
  EXPECT_EQ(st.created, (32u / 4) * (24u / 4));
  p.stride = 0;
  EXPECT_THROW(fuse_frame(m, far.v, far.n, far.labels, Pose::identity(), kSmall, p),
               InvalidArgument);
}

TEST(Merge, SingleDirectiveRelabels) {
  LabelTable t(3);
  for (int i = 0; i < 8; ++i) t.create();
  SurfelMap m;
  for (LabelId l : {7u, 3u, 7u, 5u, kNoLabel}) m.add({Vec3(0, 0, 1), Vec3(0, 0, -1), 0.0, 1.0, l});
  const std::vector<MergeDirective> d{{7, 3}};
  apply_merge_directives(m, d, t);
  std::vector<LabelId> got;
  for (const Surfel& s : m.surfels()) got.push_back(s.label);
  EXPECT_EQ(got, (std::vector<LabelId>{3, 3, 3, 5, kNoLabel}));
}

TEST(Merge, ChainEndsAtFinalSurvivor) {
  LabelTable t(3);
  for (int i = 0; i < 8; ++i) t.create();
  SurfelMap m;
  for (LabelId l : {7u, 3u, 1u, 2u}) m.add({Vec3(0, 0, 1), Vec3(0, 0, -1), 0.0, 1.0, l});
  const std::vector<MergeDirective> d{{7, 3}, {3, 1}};
  apply_merge_directives(m, d, t);
  merge_label_records(t, d);
  std::vector<LabelId> got;
  for (const Surfel& s : m.surfels()) {
    got.push_back(s.label);
    ASSERT_TRUE(t.contains(s.label));
  }
  EXPECT_EQ(got, (std::vector<LabelId>{1, 1, 1, 2}));
}

TEST(Merge, EmptyDirectivesAndBadLabels) {
  LabelTable t(3);
  t.create();
  t.create();
  SurfelMap m;
  m.add({Vec3(0, 0, 1), Vec3(0, 0, -1), 0.0, 1.0, 1});
  apply_merge_directives(m, {}, t);
  EXPECT_EQ(m[0].label, 1u);
  const std::vector<MergeDirective> unknown{{9, 0}};
  EXPECT_THROW(apply_merge_directives(m, unknown, t), UnknownLabel);
  const std::vector<MergeDirective> self{{1, 1}};
  EXPECT_THROW(apply_merge_directives(m, self, t), InvalidArgument);
}

TEST(Mapping, LabelHistogram) {
  SurfelMap m;
  for (LabelId l : {0u, 2u, 2u, kNoLabel, 9u}) m.add({Vec3::Zero(), Vec3::UnitZ(), 0.0, 1.0, l});
  EXPECT_EQ(m.label_histogram(3), (std::vector<std::size_t>{1, 0, 2}));
}
