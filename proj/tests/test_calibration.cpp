#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "contreg/calibration.hpp"
#include "contreg/error.hpp"
#include "contreg/synth.hpp"
#include "support/gen.hpp"

using namespace contreg;

namespace {

CameraView ring_view(double angle_deg) {
  CameraRingSpec ring;
  ring.num_views = 1;
  ring.start_angle_deg = angle_deg;
  return build_camera_ring(ring)[0];
}

double reproj_cost(const RigidPose& pose, const std::vector<Correspondence2D3D>& corr, const CameraIntrinsics& k) {
  double c = 0.0;
  for (const auto& x : corr) c += (project_camera_point(pose.apply(x.point), k) - x.pixel).squaredNorm();
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no contreg::Error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("calibration") {
  TEST_CASE("P3P recovers the generating pose") {
    int recovered = 0;
    gen::for_all(100, 41, [&](gen::Rng& g, int) {
      CameraIntrinsics k;
      k.focal_px = g.uniform(1000, 4000);
      const RigidPose truth(g.rotation(), Vec3(g.uniform(-30, 30), g.uniform(-30, 30), g.uniform(300, 900)));
      std::array<Correspondence2D3D, 3> corr;
      for (auto& c : corr) {
        c.point = g.vec3(-60, 60);
        c.pixel = project_camera_point(truth.apply(c.point), k);
      }
      std::vector<RigidPose> sols;
      try {
        sols = solve_p3p(corr, k);
      } catch (const Error& e) {
        FAIL("solver threw " << e.what());
      }
      bool found = false;
      for (const auto& s : sols) {
        for (const auto& c : corr) CHECK((project_camera_point(s.apply(c.point), k) - c.pixel).norm() < 1e-6);
        if (gen::max_abs(s.rotation() - truth.rotation()) < 1e-6) found = true;
      }
      CHECK(found);
      recovered += found;
      CHECK(sols.size() <= 4);
    });
    CHECK(recovered == 100);
  }

  TEST_CASE("frontal equilateral triangle") {
    CameraIntrinsics k;
    const RigidPose truth(Mat3::Identity(), Vec3(0, 0, 500));
    std::array<Correspondence2D3D, 3> corr;
    for (int i = 0; i < 3; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 3.0;
      corr[i].point = Vec3(30 * std::cos(a), 30 * std::sin(a), 0);
      corr[i].pixel = project_camera_point(truth.apply(corr[i].point), k);
    }
    const auto sols = solve_p3p(corr, k);
    REQUIRE(!sols.empty());
    bool found = false;
    for (const auto& s : sols) found = found || s.max_abs_diff(truth) < 1e-6;
    CHECK(found);
  }

  TEST_CASE("degenerate P3P inputs") {
    CameraIntrinsics k;
    std::array<Correspondence2D3D, 3> line{{{{480, 480}, {0, 0, 0}}, {{490, 480}, {10, 0, 0}}, {{500, 480}, {20, 0, 0}}}};
    CHECK(code_of([&] { solve_p3p(line, k); }) == ErrorCode::CollinearPoints);
    // one pixel for three distinct points cannot be explained by positive depths
    std::array<Correspondence2D3D, 3> same{{{{480, 480}, {0, 0, 0}}, {{480, 480}, {10, 0, 0}}, {{480, 480}, {0, 10, 0}}}};
    CHECK(code_of([&] { solve_p3p(same, k); }) == ErrorCode::NoRealSolution);
  }

  TEST_CASE("LM refinement: fixed point, recovery and descent") {
    gen::for_all(30, 42, [](gen::Rng& g, int) {
      CameraIntrinsics k;
      k.focal_px = 3289.0;
      const RigidPose truth(g.rotation(), Vec3(g.uniform(-10, 10), g.uniform(-10, 10), 600));
      std::vector<Correspondence2D3D> exact, noisy;
      for (int i = 0; i < 10; ++i) {
        const Vec3 x = g.vec3(-40, 40);
        const Vec2 px = project_camera_point(truth.apply(x), k);
        exact.push_back({px, x});
        noisy.push_back({px + Vec2(g.normal(0.5), g.normal(0.5)), x});
      }
      CHECK(refine_pose_lm(truth, exact, k).max_abs_diff(truth) < 1e-9);

      const RigidPose start = truth * euler_to_pose(g.uniform(-2, 2), g.uniform(-2, 2), g.uniform(-2, 2), g.vec3(-5, 5) / std::sqrt(3.0));
      const RigidPose rec = refine_pose_lm(start, exact, k);
      for (const auto& c : exact) CHECK((project_camera_point(rec.apply(c.point), k) - c.pixel).norm() < 1e-6);

      const RigidPose rn = refine_pose_lm(start, noisy, k);
      CHECK(reproj_cost(rn, noisy, k) <= reproj_cost(start, noisy, k));
    });
  }

  TEST_CASE("noiseless blind PnP matches all beads") {
    const FiducialModel fid = default_fiducial();
    const CameraView view = ring_view(20.0);
    BeadDetections det;
    for (const auto& b : fid.bead_positions) det.centers_px.push_back(project(b, view));
    const CalibrationResult res = blind_pnp(det, fid, view.intrinsics);
    CHECK(res.inlier_count == 16);
    CHECK(res.mean_reproj_err_px < 1e-6);
    CHECK(res.pose.max_abs_diff(view.extrinsic) < 1e-6);
    for (std::size_t i = 0; i < res.matching.size(); ++i) {
      CHECK(res.matching[i].detection == static_cast<int>(i));
      CHECK(res.matching[i].bead_id == fid.bead_ids[i]);
    }
  }

  TEST_CASE("12 noisy beads plus 3 spurious detections") {
    const FiducialModel fid = default_fiducial();
    gen::for_all(3, 43, [&](gen::Rng& g, int) {
      const CameraView view = ring_view(g.uniform(0, 360));
      std::vector<int> ids(16);
      std::iota(ids.begin(), ids.end(), 0);
      std::shuffle(ids.begin(), ids.end(), g.engine());
      ids.resize(12);
      BeadDetections det;
      std::set<std::pair<int, int>> truth;
      for (int j : ids) {
        // Noise conditioned to stay inside the inlier radius, so the exact
        // assignment is the only correct answer.
        Vec2 n;
        do n = Vec2(g.normal(0.3), g.normal(0.3));
        while (n.norm() > 0.6);
        truth.insert({static_cast<int>(det.centers_px.size()), fid.bead_ids[j]});
        det.centers_px.push_back(project(fid.bead_positions[j], view) + n);
      }
      for (int s = 0; s < 3; ++s) det.centers_px.push_back(g.vec2(0, 976));
      const CalibrationResult res = blind_pnp(det, fid, view.intrinsics);
      std::set<std::pair<int, int>> got;
      for (const auto& m : res.matching) got.insert({m.detection, m.bead_id});
      CHECK(got == truth);
      CHECK(res.mean_reproj_err_px <= 0.8);
    });
  }

  TEST_CASE("blind PnP invariants: injective, consistent, order independent") {
    const FiducialModel fid = default_fiducial();
    gen::for_all(4, 44, [&](gen::Rng& g, int i) {
      const CameraView view = ring_view(g.uniform(0, 360));
      const SimulatedBeads sim = simulate_bead_detections(fid, view, 0.3, BeadNoiseSpec{4, 3}, g.engine());
      BeadDetections det{sim.detections_px};
      // Small sets take the exhaustive path, larger ones the sampled path.
      if (i % 2 == 0) det.centers_px.resize(std::min<std::size_t>(det.centers_px.size(), 9));
      const CalibrationResult res = blind_pnp(det, fid, view.intrinsics);

      std::set<int> dets, beads;
      for (const auto& m : res.matching) {
        CHECK(dets.insert(m.detection).second);
        CHECK(beads.insert(m.bead_id).second);
        const auto j = std::find(fid.bead_ids.begin(), fid.bead_ids.end(), m.bead_id) - fid.bead_ids.begin();
        const double err = (project_camera_point(res.pose.apply(fid.bead_positions[j]), view.intrinsics) -
                            det.centers_px[m.detection]).norm();
        CHECK(err <= 0.8);
      }
      CHECK(res.inlier_count == static_cast<int>(res.matching.size()));

      std::vector<int> perm(det.centers_px.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), g.engine());
      BeadDetections shuffled;
      for (int p : perm) shuffled.centers_px.push_back(det.centers_px[p]);
      const CalibrationResult res2 = blind_pnp(shuffled, fid, view.intrinsics);
      CHECK(res2.pose.max_abs_diff(res.pose) < 1e-9);
      std::set<std::pair<int, int>> a, b;
      for (const auto& m : res.matching) a.insert({m.detection, m.bead_id});
      for (const auto& m : res2.matching) b.insert({perm[m.detection], m.bead_id});
      CHECK(a == b);
    });
  }

  TEST_CASE("blind PnP preconditions") {
    const FiducialModel fid = default_fiducial();
    const CameraView view = ring_view(0.0);
    BeadDetections three;
    for (int j = 0; j < 3; ++j) three.centers_px.push_back(project(fid.bead_positions[j], view));
    CHECK(code_of([&] { blind_pnp(three, fid, view.intrinsics); }) == ErrorCode::InsufficientDetections);

    BeadDetections six;
    for (int j = 0; j < 6; ++j) six.centers_px.push_back(project(fid.bead_positions[j], view) + Vec2(0.3, -0.2));
    BlindPnpOptions strict;
    strict.inlier_thresh_px = 1e-9;
    CHECK(code_of([&] { blind_pnp(six, fid, view.intrinsics, strict); }) == ErrorCode::NoValidPose);
  }

  TEST_CASE("fiducial validation and JSON round trip") {
    FiducialModel flat;
    for (int i = 0; i < 6; ++i) {
      flat.bead_positions.push_back(Vec3(i, i * i, 0));
      flat.bead_ids.push_back(i);
    }
    CHECK(code_of([&] { flat.validate(); }) == ErrorCode::DegenerateGeometry);
    FiducialModel few = default_fiducial();
    few.bead_positions.resize(3);
    few.bead_ids.resize(3);
    CHECK(code_of([&] { few.validate(); }) == ErrorCode::InvalidArgument);
    FiducialModel dup = default_fiducial();
    dup.bead_ids[1] = dup.bead_ids[0];
    CHECK(code_of([&] { dup.validate(); }) == ErrorCode::InvalidArgument);

    const FiducialModel fid = default_fiducial();
    CHECK(fid.bead_positions.size() == 16);
    const auto path = std::filesystem::temp_directory_path() / "contreg_fiducial_test.json";
    write_fiducial_json(path, fid);
    const FiducialModel back = read_fiducial_json(path);
    CHECK(back.bead_ids == fid.bead_ids);
    CHECK(back.bead_positions == fid.bead_positions);
    std::filesystem::remove(path);
  }
}
