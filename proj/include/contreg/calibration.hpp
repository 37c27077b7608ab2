#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "contreg/geometry.hpp"

namespace contreg {

/// Radio-opaque bead layout in the fiducial frame.
struct FiducialModel {
  std::vector<Vec3> bead_positions;  ///< mm
  std::vector<int> bead_ids;

  /// Throws InvalidArgument for fewer than 4 beads, mismatched or duplicate
  /// ids; DegenerateGeometry when the beads are coplanar.
  void validate() const;
};

/// `{"beads": [{"id": int, "xyz_mm": [x, y, z]}, ...]}`
FiducialModel read_fiducial_json(const std::filesystem::path& path);
void write_fiducial_json(const std::filesystem::path& path, const FiducialModel& model);

struct BeadDetections {
  std::vector<Vec2> centers_px;
};

struct BeadMatch {
  int detection = 0;  ///< index into BeadDetections::centers_px
  int bead_id = 0;

  friend bool operator==(const BeadMatch&, const BeadMatch&) = default;
  friend auto operator<=>(const BeadMatch&, const BeadMatch&) = default;
};

struct CalibrationResult {
  RigidPose pose;  ///< fiducial -> camera
  std::vector<BeadMatch> matching;  ///< sorted by detection index
  int inlier_count = 0;
  double mean_reproj_err_px = 0.0;
  std::int64_t hypotheses_evaluated = 0;
};

struct Correspondence2D3D {
  Vec2 pixel;
  Vec3 point;
};

/// Known-intrinsics minimal pose solver. Returns every real solution with
/// positive depths that reprojects the three points to < 1e-6 px.
/// Throws CollinearPoints, NoRealSolution.
std::vector<RigidPose> solve_p3p(const std::array<Correspondence2D3D, 3>& corr,
                                 const CameraIntrinsics& intrinsics);

/// Levenberg-Marquardt on squared reprojection error. The cost never
/// increases; pose0 is returned when no step improves it.
RigidPose refine_pose_lm(const RigidPose& pose0, const std::vector<Correspondence2D3D>& corr,
                         const CameraIntrinsics& intrinsics);

struct BlindPnpOptions {
  double inlier_thresh_px = 0.8;
  /// Exhaustive enumeration up to this many detections, sampling above.
  int exhaustive_max_detections = 12;
  std::int64_t sampled_hypotheses = 200000;
  std::uint64_t seed = 0x5eed;
};

/// Pose and 2D-3D assignment from unlabeled detections: every minimal
/// (3 detections, 3 beads) hypothesis is solved with P3P and scored by the
/// number of mutual-nearest detection/bead pairs within the threshold; the
/// winner (ties: lower mean error, then lexicographic matching) is refined on
/// its inliers and re-matched until the matching is stable. Independent of
/// the order of the detections.
/// Throws InsufficientDetections (< 4 detections), NoValidPose (< 4 inliers).
CalibrationResult blind_pnp(const BeadDetections& detections, const FiducialModel& model,
                            const CameraIntrinsics& intrinsics, const BlindPnpOptions& options = {});

/// Mutual-nearest matching of detections to the beads projected under `pose`,
/// keeping pairs within `thresh_px`. Sorted by detection index.
std::vector<BeadMatch> match_beads(const RigidPose& pose, const BeadDetections& detections,
                                   const FiducialModel& model, const CameraIntrinsics& intrinsics,
                                   double thresh_px);

}  // namespace contreg
