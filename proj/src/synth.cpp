#include "contreg/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "contreg/error.hpp"

namespace contreg {

namespace {

constexpr double kPi = std::numbers::pi;

void append_cylinder(const CylinderSpec& c, int resolution, ClassId cls, LabeledMesh& mesh) {
  const int axial = c.axial_segments * resolution;
  const int radial = c.radial_segments * resolution;
  const int base = static_cast<int>(mesh.vertices.size());
  const auto ring_vertex = [&](int i, int j) { return base + i * radial + (j % radial); };
  for (int i = 0; i <= axial; ++i) {
    const double x = c.start_x_mm + c.length_mm * i / axial;
    for (int j = 0; j < radial; ++j) {
      const double a = 2.0 * kPi * j / radial;
      mesh.vertices.emplace_back(x, c.radius_mm * std::cos(a), c.radius_mm * std::sin(a));
    }
  }
  const int cap0 = static_cast<int>(mesh.vertices.size());
  mesh.vertices.emplace_back(c.start_x_mm, 0.0, 0.0);
  const int cap1 = cap0 + 1;
  mesh.vertices.emplace_back(c.start_x_mm + c.length_mm, 0.0, 0.0);
  mesh.vertex_class.resize(mesh.vertices.size(), cls);

  for (int i = 0; i < axial; ++i) {
    for (int j = 0; j < radial; ++j) {
      const int a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
      const int cc = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
      mesh.triangles.push_back({a, b, cc});
      mesh.triangles.push_back({b, d, cc});
    }
  }
  for (int j = 0; j < radial; ++j) {
    mesh.triangles.push_back({cap0, ring_vertex(0, j + 1), ring_vertex(0, j)});
    mesh.triangles.push_back({cap1, ring_vertex(axial, j), ring_vertex(axial, j + 1)});
  }
}

void append_sphere(const SphereSpec& s, int rings, int sectors, ClassId cls, LabeledMesh& mesh) {
  const int base = static_cast<int>(mesh.vertices.size());
  const int north = base;
  mesh.vertices.push_back(s.center_mm + Vec3(0.0, 0.0, s.radius_mm));
  for (int k = 1; k < rings; ++k) {
    const double polar = kPi * k / rings;
    for (int j = 0; j < sectors; ++j) {
      const double az = 2.0 * kPi * j / sectors;
      const Vec3 dir(std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az), std::cos(polar));
      mesh.vertices.push_back(s.center_mm + s.radius_mm * dir);
    }
  }
  const int south = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(s.center_mm - Vec3(0.0, 0.0, s.radius_mm));
  mesh.vertex_class.resize(mesh.vertices.size(), cls);

  const auto ring_vertex = [&](int k, int j) { return base + 1 + (k - 1) * sectors + (j % sectors); };
  for (int j = 0; j < sectors; ++j) {
    mesh.triangles.push_back({north, ring_vertex(1, j), ring_vertex(1, j + 1)});
    mesh.triangles.push_back({south, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)});
  }
  for (int k = 1; k + 1 < rings; ++k) {
    for (int j = 0; j < sectors; ++j) {
      const int a = ring_vertex(k, j), b = ring_vertex(k, j + 1);
      const int c = ring_vertex(k + 1, j), d = ring_vertex(k + 1, j + 1);
      mesh.triangles.push_back({a, c, d});
      mesh.triangles.push_back({a, d, b});
    }
  }
}

std::size_t rounded_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

PhantomSpec PhantomSpec::standard() {
  PhantomSpec spec;
  spec.condyles = {SphereSpec{17.0, Vec3(42.0, 17.0, -4.0)}, SphereSpec{15.0, Vec3(40.0, -17.0, -4.0)}};
  return spec;
}

PhantomSpec PhantomSpec::mirror_symmetric() {
  PhantomSpec spec;
  spec.condyles = {SphereSpec{16.0, Vec3(40.0, 17.0, 0.0)}, SphereSpec{16.0, Vec3(40.0, -17.0, 0.0)}};
  return spec;
}

PhantomSpec PhantomSpec::varied(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PhantomSpec spec;
  spec.diaphysis->radius_mm = u(9.5, 12.5);
  spec.diaphysis->length_mm = u(80.0, 100.0);
  spec.diaphysis->start_x_mm = 30.0 - spec.diaphysis->length_mm;
  const double rm = u(15.0, 18.0), rl = u(13.0, 16.0);
  spec.condyles = {SphereSpec{rm, Vec3(u(38.0, 44.0), rm + u(0.5, 2.5), u(-6.0, -2.0))},
                   SphereSpec{rl, Vec3(u(37.0, 42.0), -rl - u(0.5, 2.5), u(-6.0, -2.0))}};
  return spec;
}

void PhantomSpec::validate() const {
  if (resolution < 1 || sphere_rings < 2 || sphere_sectors < 3) {
    throw Error(ErrorCode::InvalidArgument, "phantom resolution too low");
  }
  if (condyles.size() > 2) throw Error(ErrorCode::InvalidArgument, "at most two condyles");
  if (!diaphysis && condyles.empty()) throw Error(ErrorCode::InvalidArgument, "empty phantom");
  if (diaphysis) {
    const auto& c = *diaphysis;
    if (!(c.radius_mm > 0.0) || !(c.length_mm > 0.0) || c.axial_segments < 1 || c.radial_segments < 3) {
      throw Error(ErrorCode::InvalidArgument, "invalid diaphysis cylinder");
    }
  }
  for (const auto& s : condyles) {
    if (!(s.radius_mm > 0.0)) throw Error(ErrorCode::InvalidArgument, "invalid condyle radius");
  }
}

LabeledMesh build_phantom(const PhantomSpec& spec) {
  spec.validate();
  LabeledMesh mesh;
  if (spec.diaphysis) append_cylinder(*spec.diaphysis, spec.resolution, kDiaphysis, mesh);
  for (std::size_t i = 0; i < spec.condyles.size(); ++i) {
    append_sphere(spec.condyles[i], spec.sphere_rings * spec.resolution,
                  spec.sphere_sectors * spec.resolution,
                  i == 0 ? kMedialCondyle : kLateralCondyle, mesh);
  }
  try {
    validate_mesh(mesh);
  } catch (const Error& e) {
    throw Error(ErrorCode::NonManifoldResult, e.what());
  }
  return mesh;
}

void NoiseSpec::validate() const {
  const auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!(gaussian_sigma_px >= 0.0) || !in_unit(misclass_fraction) || !in_unit(dropout_fraction) ||
      !(spurious_fraction >= 0.0 && spurious_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise fractions must lie in [0, 1], sigma >= 0");
  }
}

void CameraRingSpec::validate() const {
  if (num_views < 1 || !(angular_spacing_deg > 0.0) || !(radius_mm > 0.0) ||
      !(source_detector_mm > radius_mm) || !(pixel_pitch_mm > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid camera ring");
  }
}

CameraIntrinsics CameraRingSpec::intrinsics() const {
  CameraIntrinsics k;
  k.focal_px = source_detector_mm / pixel_pitch_mm;
  k.principal_point = Vec2(kImageSizePx / 2.0, kImageSizePx / 2.0);
  k.pixel_pitch = pixel_pitch_mm;
  return k;
}

std::vector<CameraView> build_camera_ring(const CameraRingSpec& ring) {
  ring.validate();
  std::vector<CameraView> views;
  for (int k = 0; k < ring.num_views; ++k) {
    const double a = (ring.start_angle_deg + k * ring.angular_spacing_deg) * kPi / 180.0;
    const Vec3 center(ring.radius_mm * std::sin(a), 0.0, -ring.radius_mm * std::cos(a));
    const Vec3 z = -center.normalized();
    const Vec3 y = Vec3::UnitY();
    const Vec3 x = y.cross(z);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    CameraView view;
    view.view_id = fmt::format("v{}", k);
    view.intrinsics = ring.intrinsics();
    view.extrinsic = RigidPose::from_approximate(r, -r * center);
    view.object_distance_mm = ring.radius_mm;
    views.push_back(std::move(view));
  }
  return views;
}

FiducialModel default_fiducial() {
  FiducialModel model;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < 16; ++i) {
    const double a = i * golden;
    const double r = 28.0 + 6.0 * (i % 3);
    model.bead_positions.emplace_back(r * std::cos(a), -30.0 + 4.0 * i, r * std::sin(a));
    model.bead_ids.push_back(i);
  }
  return model;
}

RigidPose default_true_pose(const LabeledMesh& mesh) {
  const PrincipalFrame frame = principal_frame(mesh);
  // Centre the bounding box, not the vertex centroid, on the isocenter.
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Mat3 r = euler_zyx_to_matrix(100.0, -12.0, 25.0) * frame.axes.transpose();
  return RigidPose::from_approximate(r, Vec3(2.0, -3.0, 4.0) - r * (0.5 * (lo + hi)));
}

RigidPose perturbed_pose(const RigidPose& truth, const PrincipalFrame& frame, double phi_deg,
                         double theta_deg, double psi_deg, const Vec3& t_mm) {
  const RigidPose f = frame.to_model();
  return truth * f * euler_to_pose(phi_deg, theta_deg, psi_deg, t_mm) * f.inverse();
}

SimulatedBeads simulate_bead_detections(const FiducialModel& fiducial, const CameraView& view, double sigma_px,
                                        const BeadNoiseSpec& noise, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double size = kImageSizePx;
  std::vector<std::pair<Vec2, int>> dets;
  for (std::size_t j = 0; j < fiducial.bead_positions.size(); ++j) {
    const auto uv = try_project(view.extrinsic.apply(fiducial.bead_positions[j]), view.intrinsics);
    if (uv && uv->minCoeff() >= 0.0 && uv->maxCoeff() < size) dets.emplace_back(*uv, fiducial.bead_ids[j]);
  }
  std::shuffle(dets.begin(), dets.end(), rng);
  const int missing = noise.max_missing > 0 ? std::uniform_int_distribution<int>(0, noise.max_missing)(rng) : 0;
  dets.resize(dets.size() - std::min<std::size_t>(dets.size(), missing));
  for (auto& d : dets) d.first += sigma_px * Vec2(gauss(rng), gauss(rng));
  const int spurious = noise.max_spurious > 0 ? std::uniform_int_distribution<int>(0, noise.max_spurious)(rng) : 0;
  for (int s = 0; s < spurious; ++s) dets.emplace_back(Vec2(unit(rng) * size, unit(rng) * size), -1);
  std::shuffle(dets.begin(), dets.end(), rng);
  SimulatedBeads out;
  for (const auto& [p, id] : dets) {
    out.detections_px.push_back(p);
    out.truth_ids.push_back(id);
  }
  return out;
}

Scene generate_scene(const LabeledMesh& mesh, const CameraRingSpec& ring, const RigidPose& true_pose,
                     const NoiseSpec& noise, const std::optional<FiducialModel>& fiducial,
                     const SceneOptions& options) {
  noise.validate();
  const std::vector<CameraView> cameras = build_camera_ring(ring);
  const auto check_index = [&](int i) {
    if (i < 0 || i >= static_cast<int>(cameras.size())) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("view index {} outside the ring", i));
    }
    return cameras[i].view_id;
  };

  Scene scene;
  for (int i : options.registration_views) scene.registration_views.push_back(check_index(i));
  for (int i : options.control_views) scene.control_views.push_back(check_index(i));
  scene.ground_truth_pose = true_pose;
  if (fiducial) scene.ground_truth_fiducial = RigidPose::identity();

  const SilhouetteExtractor extractor(mesh);
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = scene.image_width_px, height = scene.image_height_px;

  const auto in_frame = [&](const Vec2& p) {
    return p.x() >= 0.0 && p.x() < width && p.y() >= 0.0 && p.y() < height;
  };

  for (const CameraView& cam : cameras) {
    SceneView sv;
    sv.camera = cam;
    sv.has_extrinsic = options.include_extrinsics;

    // Clean per-class contour and whole-bone outline.
    std::vector<std::pair<ClassId, Vec2>> clean;
    for (const auto& s : extractor.extract(true_pose, cam, options.sample_spacing_mm, SilhouetteMode::PerClass)) {
      const Vec2 uv = project(true_pose.apply(s.position), cam);
      if (!in_frame(uv)) {
        throw Error(ErrorCode::OutOfFrame, fmt::format("silhouette leaves the image in view {}", cam.view_id));
      }
      clean.emplace_back(s.class_id, uv);
    }
    auto& outline = scene.truth_outlines[cam.view_id];
    for (const auto& s : extractor.extract(true_pose, cam, options.sample_spacing_mm, SilhouetteMode::WholeBone)) {
      outline.push_back(project(true_pose.apply(s.position), cam));
    }

    // Dropout.
    std::vector<std::size_t> idx(clean.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(clean.size() - rounded_count(noise.dropout_fraction, clean.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<std::pair<ClassId, Vec2>> kept;
    kept.reserve(idx.size());
    for (std::size_t i : idx) kept.push_back(clean[i]);

    // Misclassification acts on condyle points only: swap 2 <-> 3 or fall
    // back to the shaft. The fraction is of the condyle points.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i].first == kMedialCondyle || kept[i].first == kLateralCondyle) order.push_back(i);
    }
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_mis = rounded_count(noise.misclass_fraction, order.size());
    for (std::size_t m = 0; m < n_mis; ++m) {
      auto& cls = kept[order[m]].first;
      if (unit(rng) < 0.5) {
        cls = kDiaphysis;
      } else {
        cls = cls == kMedialCondyle ? kLateralCondyle : kMedialCondyle;
      }
    }

    ContourObservation obs;
    obs.view_id = cam.view_id;
    for (auto& [cls, p] : kept) {
      if (noise.gaussian_sigma_px > 0.0) {
        p += noise.gaussian_sigma_px * Vec2(gauss(rng), gauss(rng));
      }
      obs.points_by_class[cls].push_back(p);
    }
    const std::size_t n_spurious = static_cast<std::size_t>(std::llround(
        noise.spurious_fraction * static_cast<double>(kept.size()) / (1.0 - noise.spurious_fraction)));
    for (std::size_t s = 0; s < n_spurious; ++s) {
      const Vec2 p(unit(rng) * width, unit(rng) * height);
      const ClassId cls = 1 + static_cast<ClassId>(std::min(2.0, std::floor(unit(rng) * 3.0)));
      obs.points_by_class[cls].push_back(p);
    }
    scene.observations.push_back(std::move(obs));

    if (fiducial) {
      SimulatedBeads beads = simulate_bead_detections(*fiducial, cam, noise.gaussian_sigma_px, options.beads, rng);
      sv.bead_detections_px = std::move(beads.detections_px);
      sv.bead_truth = std::move(beads.truth_ids);
    }
    scene.views.push_back(std::move(sv));
  }
  return scene;
}

}  // namespace contreg
