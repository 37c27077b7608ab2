#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>

namespace contreg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Detector geometry of the C-arm used throughout: 976x976 px over 296.7 mm.
inline constexpr int kImageSizePx = 976;
inline constexpr double kDetectorSizeMm = 296.7;
inline constexpr double kPixelPitchMm = kDetectorSizeMm / kImageSizePx;

/// Rigid transform x -> R x + t. Rotation is kept orthonormal with det +1.
class RigidPose {
 public:
  RigidPose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Throws InvalidArgument unless `rotation` is orthonormal with det +1
  /// within 1e-9 per entry.
  RigidPose(const Mat3& rotation, const Vec3& translation);

  static RigidPose identity() { return {}; }

  /// Projects an approximately orthonormal matrix onto SO(3) (SVD) before
  /// constructing; for parsing and accumulated round-off.
  static RigidPose from_approximate(const Mat3& rotation, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  RigidPose inverse() const;

  /// `a * b` applies b first, then a.
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b);

  /// Largest absolute entry difference over rotation and translation.
  double max_abs_diff(const RigidPose& other) const;

 private:
  struct Unchecked {};
  RigidPose(const Mat3& r, const Vec3& t, Unchecked) : rotation_(r), translation_(t) {}

  Mat3 rotation_;
  Vec3 translation_;
};

inline RigidPose compose(const RigidPose& a, const RigidPose& b) { return a * b; }

/// Rotation matrix for intrinsic Z-Y-X Euler angles in degrees:
/// R = Rz(phi) * Ry(theta) * Rx(psi).
Mat3 euler_zyx_to_matrix(double phi_deg, double theta_deg, double psi_deg);

RigidPose euler_to_pose(double phi_deg, double theta_deg, double psi_deg, const Vec3& t_mm);

struct EulerZyx {
  double phi_deg = 0.0;
  double theta_deg = 0.0;
  double psi_deg = 0.0;
};

/// Inverse of euler_zyx_to_matrix; at gimbal lock (|theta| = 90) psi is set to 0.
EulerZyx matrix_to_euler_zyx(const Mat3& rotation);

/// Rodrigues formula for an axis-angle vector (radians).
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);

/// Local 6-vector increment (axis-angle, translation) applied in the outer
/// frame about `pivot`: x -> Exp(w) (pose(x) - pivot) + pivot + v.
RigidPose apply_increment(const RigidPose& pose, const Vec6& delta, const Vec3& pivot);

struct CameraIntrinsics {
  double focal_px = 1000.0;
  Vec2 principal_point{488.0, 488.0};
  double pixel_pitch = kPixelPitchMm;

  /// Throws InvalidArgument on non-positive focal length or pixel pitch.
  void validate() const;
};

struct CameraView {
  std::string view_id;
  CameraIntrinsics intrinsics;
  RigidPose extrinsic;  ///< world -> camera
  /// Source-to-object distance; enables residual scaling to object-plane mm.
  std::optional<double> object_distance_mm;

  Vec3 center_world() const;

  /// Size of one pixel back-projected to the object plane (mm/px); raw pixel
  /// pitch when no depth metadata is available.
  double object_mm_per_px() const;
};

/// Pinhole projection of a camera-frame point; throws NonPositiveDepth when
/// z <= 1e-9 mm.
Vec2 project_camera_point(const Vec3& p_cam, const CameraIntrinsics& k);

/// Projection of a world-frame point through the view's extrinsic.
Vec2 project(const Vec3& point_world, const CameraView& view);

/// Non-throwing variant for hot loops.
std::optional<Vec2> try_project(const Vec3& p_cam, const CameraIntrinsics& k);

inline constexpr double kMinDepthMm = 1e-9;

}  // namespace contreg
