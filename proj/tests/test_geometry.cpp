#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace segfusion;

namespace {

struct Maps {
  VertexMap v;
  NormalMap n;
};

Maps maps_of(const SyntheticFrame& f, const CameraIntrinsics& k) {
  VertexMap v = compute_vertex_map(f.depth, k);
  NormalMap n = compute_normal_map(v);
  return {std::move(v), std::move(n)};
}

SyntheticFrame render_at(const SceneSpec& s, const Pose& p) { return render_scene(s, p); }

// True when the 3x3 neighborhood of (x, y) lies on one primitive.
bool single_primitive(const SyntheticFrame& f, int x, int y) {
  const int id = f.gt_segment(x, y);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (!f.gt_segment.contains(x + dx, y + dy) || f.gt_segment(x + dx, y + dy) != id) {
        return false;
      }
    }
  }
  return id >= 0;
}

}  // namespace

TEST(VertexMap, ConstantDepthPlane) {
  const auto s = scenes::single_plane(1.0);
  const auto f = render_at(s, Pose::identity());
  const auto v = compute_vertex_map(f.depth, s.intrinsics);
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      ASSERT_TRUE(v.is_valid(x, y));
      ASSERT_NEAR(v(x, y).z(), 1.0, 1e-12);
    }
  }
}

TEST(VertexMap, ZeroDepthIsInvalid) {
  const CameraIntrinsics k{10, 10, 4, 4, 8, 8};
  Grid<double> d(8, 8, 1.0);
  d(3, 5) = 0.0;
  const auto v = compute_vertex_map(DepthFrame::from_meters(d), k);
  EXPECT_FALSE(v.is_valid(3, 5));
  EXPECT_TRUE(v.is_valid(4, 5));
  EXPECT_THROW(compute_vertex_map(DepthFrame::from_meters(Grid<double>(16, 8, 1.0)), k),
               InvalidArgument);
}

TEST(VertexMap, TwoPlaneSceneMatchesPlaneEquations) {
  const auto s = scenes::two_plane_corner();
  const auto f = render_at(s, Pose::identity());
  const auto v = compute_vertex_map(f.depth, s.intrinsics);
  for (int y = 0; y < v.height(); ++y) {
    for (int x = 0; x < v.width(); ++x) {
      ASSERT_TRUE(v.is_valid(x, y));
      const auto& p = s.planes[static_cast<std::size_t>(f.gt_segment(x, y))];
      ASSERT_NEAR(v(x, y)[p.axis], p.offset, 1e-6);
    }
  }
}

TEST(NormalMap, FrontoParallelPlaneFacesCamera) {
  const auto s = scenes::single_plane(1.5);
  const auto m = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  for (int y = 1; y + 1 < m.n.height(); ++y) {
    for (int x = 1; x + 1 < m.n.width(); ++x) {
      ASSERT_TRUE(m.n.is_valid(x, y));
      ASSERT_NEAR((m.n(x, y) - Vec3(0, 0, -1)).norm(), 0.0, 1e-6);
    }
  }
  EXPECT_FALSE(m.n.is_valid(0, 5));
  EXPECT_FALSE(m.n.is_valid(5, m.n.height() - 1));
}

TEST(NormalMap, CornerNormalsMatchPlanes) {
  const auto s = scenes::two_plane_corner();
  const auto f = render_at(s, Pose::identity());
  const auto m = maps_of(f, s.intrinsics);
  const Vec3 expected[2] = {{0, 0, -1}, {-1, 0, 0}};
  std::size_t checked[2] = {0, 0};
  for (int y = 1; y + 1 < m.n.height(); ++y) {
    for (int x = 1; x + 1 < m.n.width(); ++x) {
      if (!single_primitive(f, x, y)) continue;
      const int id = f.gt_segment(x, y);
      ASSERT_TRUE(m.n.is_valid(x, y));
      ASSERT_NEAR((m.n(x, y) - expected[id]).norm(), 0.0, 1e-3) << x << "," << y;
      ++checked[id];
    }
  }
  EXPECT_GT(checked[0], 1000u);
  EXPECT_GT(checked[1], 1000u);
}

TEST(NormalMap, IsolatedPixelIsInvalid) {
  const CameraIntrinsics k{10, 10, 4, 4, 8, 8};
  Grid<double> d(8, 8, 0.0);
  d(4, 4) = 1.0;
  const auto v = compute_vertex_map(DepthFrame::from_meters(d), k);
  EXPECT_FALSE(compute_normal_map(v).is_valid(4, 4));
}

TEST(GeometricEdges, FlatPlaneInteriorIsEdgeFree) {
  const auto s = scenes::single_plane(1.0);
  const auto m = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  const auto e = geometric_edge_map(m.v, m.n);
  for (int y = 2; y + 2 < e.height(); ++y) {
    for (int x = 2; x + 2 < e.width(); ++x) ASSERT_EQ(e(x, y), 0) << x << "," << y;
  }
  // Pixels without a usable normal are edges.
  EXPECT_EQ(e(0, 10), 1);
}

TEST(GeometricEdges, InvariantUnderSmallDepthOffset) {
  const auto s1 = scenes::single_plane(1.0);
  const auto s2 = scenes::single_plane(1.0 + 0.04);
  const auto m1 = maps_of(render_at(s1, Pose::identity()), s1.intrinsics);
  const auto m2 = maps_of(render_at(s2, Pose::identity()), s2.intrinsics);
  EXPECT_EQ(geometric_edge_map(m1.v, m1.n), geometric_edge_map(m2.v, m2.n));
}

TEST(GeometricEdges, DepthStepGivesEdgeColumn) {
  const auto s = scenes::depth_step(1.0, 2.0);
  const auto m = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  const auto e = geometric_edge_map(m.v, m.n);
  // Column 160 is the last near column. Its central-difference normal spans
  // the step, so the edge band straddles it.
  for (int y = 3; y + 3 < e.height(); ++y) {
    ASSERT_EQ(e(159, y), 1) << y;
    ASSERT_EQ(e(161, y), 1) << y;
    for (int x = 3; x < 155; ++x) ASSERT_EQ(e(x, y), 0);
    for (int x = 166; x + 3 < e.width(); ++x) ASSERT_EQ(e(x, y), 0);
  }
  const auto seg = connected_components(e);
  EXPECT_NE(seg.ids(80, 120), SegmentFrame::kInvalidSegment);
  EXPECT_NE(seg.ids(240, 120), SegmentFrame::kInvalidSegment);
  EXPECT_NE(seg.ids(80, 120), seg.ids(240, 120));
}

TEST(GeometricEdges, CornerGivesEdgeBandAlongFold) {
  const auto s = scenes::two_plane_corner();
  const auto m = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  EdgeThresholds t;
  t.max_normal_angle = deg2rad(20.0);
  const auto e = geometric_edge_map(m.v, m.n, t);
  // Fold line at u = 250 * 0.5 / 2 + 160 = 222.5.
  for (int y = 3; y + 3 < e.height(); ++y) {
    ASSERT_TRUE(e(222, y) || e(223, y)) << y;
    for (int x = 3; x < 218; ++x) ASSERT_EQ(e(x, y), 0);
  }
}

TEST(GeometricEdges, MonotoneInThresholds) {
  const auto s = scenes::cluttered_room(3);
  const auto m = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(1.0, 60.0), dist(0.001, 0.2), shrink(0.1, 1.0);
  for (int i = 0; i < 10; ++i) {
    EdgeThresholds loose{deg2rad(angle(rng)), dist(rng)};
    EdgeThresholds tight{loose.max_normal_angle * shrink(rng), loose.max_plane_distance * shrink(rng)};
    const auto a = geometric_edge_map(m.v, m.n, loose);
    const auto b = geometric_edge_map(m.v, m.n, tight);
    for (std::size_t p = 0; p < a.size(); ++p) ASSERT_GE(b[p], a[p]);
  }
}

// ---------------------------------------------------------------------------
// ICP

namespace {

ModelView model_of(const SceneSpec& s, const Pose& pose) {
  const auto m = maps_of(render_at(s, pose), s.intrinsics);
  return {m.v, m.n, pose};
}

}  // namespace

TEST(Icp, SelfRegistrationIsIdentity) {
  const auto s = scenes::room_corner();
  const auto model = model_of(s, Pose::identity());
  const auto r = icp_point_to_plane(model.vertices, model.normals, model, s.intrinsics,
                                    Pose::identity());
  const auto [dt, dr] = pose_error(r.pose, Pose::identity());
  EXPECT_LT(dt, 1e-12);
  EXPECT_LT(dr, 1e-9);
  EXPECT_LT(r.residual, 1e-9);
  EXPECT_GT(r.inliers, 10000u);
}

TEST(Icp, RecoversSmallMotionOnRoomCorner) {
  const auto s = scenes::room_corner();
  const auto model = model_of(s, Pose::identity());
  const Pose truth = Pose::from_twist(Vec3(0.3, -0.2, 0.4).normalized() * deg2rad(0.5),
                                      Vec3(0.003, -0.002, 0.0034).normalized() * 0.005);
  const auto cur = maps_of(render_at(s, truth), s.intrinsics);
  const auto r = icp_point_to_plane(cur.v, cur.n, model, s.intrinsics, Pose::identity());
  const auto [dt, dr] = pose_error(r.pose, truth);
  EXPECT_LT(dt, 1e-3);
  EXPECT_LT(rad2deg(dr), 0.1);
}

TEST(Icp, ErrorNeverIncreasesAcrossAcceptedSteps) {
  const auto s = scenes::room_corner();
  const Pose start = Pose::from_twist({0, 0, 0}, {0, 0, 0});
  const auto model = model_of(s, start);
  const Pose truth = Pose::from_twist(Vec3(1, 1, 0).normalized() * deg2rad(1.5), {0.015, -0.01, 0.01});
  const auto cur = maps_of(render_at(s, truth), s.intrinsics);
  const auto r = icp_point_to_plane(cur.v, cur.n, model, s.intrinsics, start);
  ASSERT_EQ(r.level_errors.size(), 3u);
  for (const auto& level : r.level_errors) {
    for (std::size_t i = 1; i < level.size(); ++i) EXPECT_LE(level[i], level[i - 1]);
  }
}

TEST(Icp, SinglePlaneIsDegenerate) {
  const auto s = scenes::single_plane(1.0);
  const auto model = model_of(s, Pose::identity());
  const Pose moved = Pose::from_twist({0, 0, 0}, {0.01, 0.005, 0});
  const auto cur = maps_of(render_at(s, moved), s.intrinsics);
  EXPECT_THROW(icp_point_to_plane(cur.v, cur.n, model, s.intrinsics, Pose::identity()),
               DegenerateGeometry);
}

TEST(Icp, TwoPlaneFoldIsDegenerate) {
  // Translation along the fold line leaves every point-to-plane residual
  // unchanged, so the normal equations are singular.
  const auto s = scenes::two_plane_corner();
  const auto model = model_of(s, Pose::identity());
  const auto cur = maps_of(render_at(s, Pose::from_twist({0, 0, 0}, {0.005, 0.0, 0.002})),
                           s.intrinsics);
  EXPECT_THROW(icp_point_to_plane(cur.v, cur.n, model, s.intrinsics, Pose::identity()),
               DegenerateGeometry);
}

TEST(Icp, EmptyModelHasTooFewInliers) {
  const auto s = scenes::room_corner();
  const auto cur = maps_of(render_at(s, Pose::identity()), s.intrinsics);
  ModelView empty{VertexMap(s.intrinsics.width, s.intrinsics.height),
                  NormalMap(s.intrinsics.width, s.intrinsics.height), Pose::identity()};
  EXPECT_THROW(icp_point_to_plane(cur.v, cur.n, empty, s.intrinsics, Pose::identity()),
               InsufficientInliers);
}
