#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "contreg/lm.hpp"
#include "contreg/mesh.hpp"
#include "contreg/scene.hpp"

namespace contreg {

enum class MatchMode {
  Substructure,    ///< points match silhouette samples of their own class
  SilhouetteOnly,  ///< classes merged; whole-bone outline only
};

std::string to_string(MatchMode mode);
/// Accepts "substructure" and "silhouette"; throws InvalidArgument otherwise.
MatchMode parse_match_mode(const std::string& s);

enum class RestartTrigger {
  /// Median residual above threshold at the end of a run.
  FinalMedian,
  /// Additionally checked right after the first `restart_check_after_updates`
  /// updates, aborting the run early.
  AfterUpdates,
};

struct RegistrationConfig {
  MatchMode mode = MatchMode::Substructure;
  /// Per match/solve loop: the ICP loop and the reweighted loop each get
  /// this many updates.
  int max_correspondence_updates = 30;
  int lm_max_iters = 50;
  bool reweight = true;
  double reweight_sigma_factor = 2.0;
  /// Reweighting rounds: after each converged reweighted loop the drop is
  /// repeated until it removes nothing or this many rounds ran. 1 reweights
  /// exactly once. Every round gets the full loop budget.
  int max_reweight_rounds = 10;
  RestartTrigger restart_trigger = RestartTrigger::FinalMedian;
  int restart_check_after_updates = 4;
  double restart_median_thresh_mm = 3.0;
  double restart_psi_min_deg = 90.0;
  double restart_psi_max_deg = 270.0;
  int max_restarts = 5;
  double sample_spacing_mm = kDefaultSampleSpacingMm;
  std::uint64_t rng_seed = 0;

  /// Throws InvalidArgument for non-positive thresholds or counts.
  void validate() const;
};

struct Correspondence {
  std::string view_id;
  int view_index = 0;
  int observation_index = 0;  ///< flat index within the view's observation
  Vec2 observed_2d;
  Vec3 model_point_3d;  ///< model frame
  ClassId class_id = kUnlabeled;
  int source_edge = -1;
  int weight = 1;
  double residual_px = 0.0;
};

/// Registration input for one view: a calibrated camera and its contour.
struct ViewData {
  CameraView camera;
  ContourObservation observation;
};

/// Pairs views with observations by id; throws InvalidArgument when an id is
/// unknown or uncalibrated.
std::vector<ViewData> collect_views(const Scene& scene, const std::vector<std::string>& ids);

/// Nearest projected silhouette sample (same class in substructure mode) for
/// every observed point, silhouettes recomputed at `pose`. Points in
/// `excluded[v][i]` are skipped. Throws EmptySilhouette when an observed class
/// has no silhouette samples in a view.
std::vector<Correspondence> match_correspondences(const SilhouetteExtractor& extractor,
                                                  const RigidPose& pose,
                                                  const std::vector<ViewData>& views,
                                                  const RegistrationConfig& config,
                                                  const std::vector<std::vector<bool>>& excluded = {});

/// Sum of squared reprojection residuals of the weight-1 correspondences,
/// minimized over the model -> world pose with cameras fixed.
/// Throws InvalidArgument with fewer than 3 active correspondences.
LmResult solve_pose_lm(const std::vector<Correspondence>& corr, const std::vector<ViewData>& views,
                       const RigidPose& pose0, const Vec3& pivot_model, const RegistrationConfig& config);

struct TraceEntry {
  int attempt = 0;  ///< 0 for the first run, k after the k-th restart
  int phase = 1;    ///< 1: ICP, 2: after reweighting
  double median_residual_mm = 0.0;
  double mean_residual_mm = 0.0;
  int inlier_count = 0;
  RigidPose pose;
  int lm_iterations = 0;
  std::vector<double> lm_costs;  ///< accepted-step cost history
};

struct RegistrationReport {
  RigidPose final_pose;  ///< model -> world
  std::vector<TraceEntry> trace;
  int restart_count = 0;
  bool converged = false;
  int total_lm_iterations = 0;
  double final_median_residual_mm = 0.0;  ///< the restart criterion, see register_with_restart
  int excluded_count = 0;  ///< correspondences removed by reweighting
  MatchMode mode = MatchMode::Substructure;
};

/// Match/solve until the (observation -> source edge) assignment repeats,
/// then drop points beyond sigma_factor * RMS residual and iterate again,
/// repeating the drop until it removes nothing (see reweight_until_stable).
RegistrationReport register_contours(const LabeledMesh& mesh, const std::vector<ViewData>& views,
                                     const RigidPose& initial_pose, const RegistrationConfig& config);

/// As register_contours, restarting with a random rotation about the first
/// principal axis while the median residual exceeds the threshold after
/// `restart_check_after_updates` updates or at the end of a run. The end of
/// run median is taken over every observed point, at the end of the ICP loop
/// and at the final pose, whichever is larger; reweighting cannot hide a bad
/// fit. On exhaustion the attempt with the lowest such median is returned.
RegistrationReport register_with_restart(const LabeledMesh& mesh, const std::vector<ViewData>& views,
                                         const RigidPose& initial_pose, const RegistrationConfig& config);

nlohmann::json report_to_json(const RegistrationReport& report, const RegistrationConfig& config);
/// Reads the final pose back from a report.
RigidPose report_final_pose(const nlohmann::json& j);

}  // namespace contreg
