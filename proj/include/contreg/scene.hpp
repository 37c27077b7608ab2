#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "contreg/geometry.hpp"
#include "contreg/mesh.hpp"

namespace contreg {

/// Per-view 2D contour points keyed by substructure class (class 0 holds a
/// merged silhouette-only observation).
struct ContourObservation {
  std::string view_id;
  std::map<ClassId, std::vector<Vec2>> points_by_class;

  std::size_t total_points() const;
  /// All classes merged under class 0.
  ContourObservation merged() const;
};

struct SceneView {
  CameraView camera;
  /// False until the extrinsic has been calibrated (bead-only views).
  bool has_extrinsic = true;
  std::vector<Vec2> bead_detections_px;
  /// Synthetic ground truth: bead id per detection, -1 for spurious ones.
  std::vector<int> bead_truth;
};

/// Everything a registration or evaluation run needs besides the mesh.
struct Scene {
  int image_width_px = kImageSizePx;
  int image_height_px = kImageSizePx;
  std::vector<SceneView> views;
  std::vector<ContourObservation> observations;
  /// Clean whole-bone contour per view, used as evaluation ground truth.
  std::map<std::string, std::vector<Vec2>> truth_outlines;
  std::vector<std::string> registration_views;
  std::vector<std::string> control_views;
  std::optional<RigidPose> ground_truth_pose;  ///< model -> world
  std::optional<RigidPose> ground_truth_fiducial;  ///< fiducial -> world, synthetic only

  /// Throws InvalidArgument for an unknown id.
  const SceneView& view(const std::string& id) const;
  SceneView& view(const std::string& id);
  bool has_view(const std::string& id) const;

  /// Calibrated cameras for the given ids; throws InvalidArgument for an
  /// unknown or uncalibrated view.
  std::vector<CameraView> cameras(const std::vector<std::string>& ids) const;

  /// Observations for the given ids, in the same order (empty when absent).
  std::vector<ContourObservation> observations_for(const std::vector<std::string>& ids) const;
};

nlohmann::json pose_to_json(const RigidPose& pose);
RigidPose pose_from_json(const nlohmann::json& j);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

/// Throws ParseError on malformed input.
Scene read_scene(const std::filesystem::path& path);
void write_scene(const std::filesystem::path& path, const Scene& scene);

/// Writes `j` pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace contreg
