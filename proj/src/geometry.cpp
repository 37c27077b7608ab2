#include "contreg/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

#include "contreg/error.hpp"

namespace contreg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kOrthoTol = 1e-9;

bool is_rotation(const Mat3& r) {
  if (!r.allFinite()) return false;
  const Mat3 gram = r.transpose() * r;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > kOrthoTol) return false;
  return std::abs(r.determinant() - 1.0) <= kOrthoTol;
}

}  // namespace

RigidPose::RigidPose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation)) {
    throw Error(ErrorCode::InvalidArgument, "rotation matrix is not orthonormal with det +1");
  }
  if (!translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "translation is not finite");
  }
}

RigidPose RigidPose::from_approximate(const Mat3& rotation, const Vec3& translation) {
  Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return RigidPose(svd.matrixU() * d * svd.matrixV().transpose(), translation);
}

RigidPose RigidPose::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return RigidPose(rt, -rt * translation_, Unchecked{});
}

RigidPose operator*(const RigidPose& a, const RigidPose& b) {
  return RigidPose(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_,
                   RigidPose::Unchecked{});
}

double RigidPose::max_abs_diff(const RigidPose& other) const {
  return std::max((rotation_ - other.rotation_).cwiseAbs().maxCoeff(),
                  (translation_ - other.translation_).cwiseAbs().maxCoeff());
}

Mat3 euler_zyx_to_matrix(double phi_deg, double theta_deg, double psi_deg) {
  const Mat3 rz = Eigen::AngleAxisd(phi_deg * kDeg, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(theta_deg * kDeg, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rx = Eigen::AngleAxisd(psi_deg * kDeg, Vec3::UnitX()).toRotationMatrix();
  return rz * ry * rx;
}

RigidPose euler_to_pose(double phi_deg, double theta_deg, double psi_deg, const Vec3& t_mm) {
  return RigidPose(euler_zyx_to_matrix(phi_deg, theta_deg, psi_deg), t_mm);
}

EulerZyx matrix_to_euler_zyx(const Mat3& r) {
  // r(2,0) = -sin(theta); theta from atan2 keeps precision near +-90
  EulerZyx e;
  const double c = std::hypot(r(0, 0), r(1, 0));
  e.theta_deg = std::atan2(-r(2, 0), c) / kDeg;
  if (c > 1e-6) {
    e.phi_deg = std::atan2(r(1, 0), r(0, 0)) / kDeg;
    e.psi_deg = std::atan2(r(2, 1), r(2, 2)) / kDeg;
  } else {
    // only phi -/+ psi is defined; error of fixing psi = 0 is O(c^2)
    e.psi_deg = 0.0;
    e.phi_deg = std::atan2(-r(0, 1), r(1, 1)) / kDeg;
  }
  return e;
}

Mat3 so3_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Mat3 skew;
    skew << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(), omega.x(), 0;
    return Mat3::Identity() + skew;
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Vec3 so3_log(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

RigidPose apply_increment(const RigidPose& pose, const Vec6& delta, const Vec3& pivot) {
  const Mat3 dr = so3_exp(delta.head<3>());
  const Mat3 r = dr * pose.rotation();
  const Vec3 t = dr * (pose.translation() - pivot) + pivot + delta.tail<3>();
  return RigidPose::from_approximate(r, t);
}

void CameraIntrinsics::validate() const {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px)) {
    throw Error(ErrorCode::InvalidArgument, "focal length must be positive");
  }
  if (!(pixel_pitch > 0.0) || !std::isfinite(pixel_pitch)) {
    throw Error(ErrorCode::InvalidArgument, "pixel pitch must be positive");
  }
}

Vec3 CameraView::center_world() const {
  return -extrinsic.rotation().transpose() * extrinsic.translation();
}

double CameraView::object_mm_per_px() const {
  if (object_distance_mm) {
    // pitch * (object distance / source-detector distance), SDD = f * pitch
    return *object_distance_mm / intrinsics.focal_px;
  }
  return intrinsics.pixel_pitch;
}

std::optional<Vec2> try_project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > kMinDepthMm)) return std::nullopt;
  return Vec2(k.focal_px * p.x() / p.z() + k.principal_point.x(),
              k.focal_px * p.y() / p.z() + k.principal_point.y());
}

Vec2 project_camera_point(const Vec3& p_cam, const CameraIntrinsics& k) {
  auto uv = try_project(p_cam, k);
  if (!uv) throw Error(ErrorCode::NonPositiveDepth, "point is behind or on the camera plane");
  return *uv;
}

Vec2 project(const Vec3& point_world, const CameraView& view) {
  return project_camera_point(view.extrinsic.apply(point_world), view.intrinsics);
}

}  // namespace contreg
