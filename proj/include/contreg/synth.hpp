#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "contreg/calibration.hpp"
#include "contreg/mesh.hpp"
#include "contreg/scene.hpp"

namespace contreg {

/// Closed cylinder along +x starting at `start_x_mm`.
struct CylinderSpec {
  double radius_mm = 11.0;
  double length_mm = 90.0;
  double start_x_mm = -60.0;
  int axial_segments = 24;
  int radial_segments = 48;
};

struct SphereSpec {
  double radius_mm = 15.0;
  Vec3 center_mm = Vec3::Zero();
};

/// Femur stand-in: a shaft (class 1) and up to two condyles (classes 2, 3),
/// each a separate closed surface. Segment counts scale with `resolution`.
struct PhantomSpec {
  std::optional<CylinderSpec> diaphysis = CylinderSpec{};
  std::vector<SphereSpec> condyles;
  int sphere_rings = 24;
  int sphere_sectors = 48;
  int resolution = 1;

  /// Unequal condyles set slightly posterior; no label-preserving mirror
  /// symmetry.
  static PhantomSpec standard();
  /// Equal condyles in the shaft's y-plane: mirror-symmetric about z = 0.
  static PhantomSpec mirror_symmetric();
  /// Standard layout with seeded jitter of every radius, length and centre.
  static PhantomSpec varied(std::uint64_t seed);

  /// Throws InvalidArgument for non-positive sizes or segment counts.
  void validate() const;
};

/// Throws NonManifoldResult if the assembled mesh fails the topology checks.
LabeledMesh build_phantom(const PhantomSpec& spec);

struct NoiseSpec {
  double gaussian_sigma_px = 0.0;
  /// Fraction of the final point set that is false contour points.
  double spurious_fraction = 0.0;
  /// Fraction of kept condyle points whose label is corrupted (2 <-> 3 or
  /// -> 1). Shaft points keep their label.
  double misclass_fraction = 0.0;
  /// Fraction of true points removed.
  double dropout_fraction = 0.0;
  std::uint64_t seed = 1;

  /// Throws InvalidArgument unless fractions are in [0, 1] (spurious < 1)
  /// and sigma >= 0.
  void validate() const;
};

/// C-arm orbit about the world y axis. View k sits at angle
/// start + k * spacing with the source at radius_mm from the isocenter.
struct CameraRingSpec {
  int num_views = 10;
  double angular_spacing_deg = 9.0;
  double start_angle_deg = 0.0;
  double radius_mm = 600.0;  ///< source to isocenter
  double source_detector_mm = 1000.0;
  double pixel_pitch_mm = kPixelPitchMm;

  /// Throws InvalidArgument for num_views < 1, spacing <= 0 or bad distances.
  void validate() const;
  CameraIntrinsics intrinsics() const;
};

std::vector<CameraView> build_camera_ring(const CameraRingSpec& ring);

struct BeadNoiseSpec {
  int max_missing = 0;
  int max_spurious = 0;
};

struct SimulatedBeads {
  std::vector<Vec2> detections_px;
  std::vector<int> truth_ids;  ///< bead id per detection, -1 when spurious
};

/// Projects the beads (fiducial frame = world) into `view`, drops up to
/// `max_missing` at random, adds per-axis Gaussian noise and up to
/// `max_spurious` uniform detections, then shuffles. Beads outside the image
/// are dropped.
SimulatedBeads simulate_bead_detections(const FiducialModel& fiducial, const CameraView& view, double sigma_px,
                                        const BeadNoiseSpec& noise, std::mt19937_64& rng);

struct SceneOptions {
  std::vector<int> registration_views{0, 6};
  std::vector<int> control_views{2, 3, 4};
  double sample_spacing_mm = kDefaultSampleSpacingMm;
  BeadNoiseSpec beads;
  /// Keep the ring extrinsics in the scene; false leaves only bead detections.
  bool include_extrinsics = true;
};

/// Projects per-class silhouettes of `mesh` under `true_pose` into each ring
/// view and corrupts them per `noise`; bead detections (same sigma) when a
/// fiducial is given, with the fiducial frame as world frame.
/// Throws OutOfFrame(view) if a silhouette point leaves the image.
Scene generate_scene(const LabeledMesh& mesh, const CameraRingSpec& ring, const RigidPose& true_pose,
                     const NoiseSpec& noise, const std::optional<FiducialModel>& fiducial,
                     const SceneOptions& options = {});

/// 16 non-coplanar beads on a helix around the world origin.
FiducialModel default_fiducial();

/// Pose that places the phantom's bounding-box centre near the isocenter with its
/// long axis roughly along the orbit axis.
RigidPose default_true_pose(const LabeledMesh& mesh);

/// Pose obtained by perturbing `truth` with Euler angles / translation
/// expressed in the mesh's principal frame.
RigidPose perturbed_pose(const RigidPose& truth, const PrincipalFrame& frame, double phi_deg,
                         double theta_deg, double psi_deg, const Vec3& t_mm);

}  // namespace contreg
