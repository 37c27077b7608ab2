#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "contreg/registration.hpp"

namespace contreg {

/// Mean distance (mm) from each ground-truth contour point to the nearest
/// reprojection of `model_points` under `pose`, converted with the view's
/// pixel pitch. Throws EmptyInput if either set is empty.
double mrpd(std::span<const Vec2> gt_contour_px, std::span<const Vec3> model_points, const RigidPose& pose,
            const CameraView& control_view);

/// Whole-bone silhouette of the mesh at `pose`, reprojected into `view`.
std::vector<Vec2> reprojected_outline(const SilhouetteExtractor& extractor, const RigidPose& pose,
                                      const CameraView& view, double sample_spacing_mm);

/// Mean distance (mm) from each predicted point to its nearest truth point.
/// Throws EmptyInput if either set is empty.
double one_sided_chamfer(std::span<const Vec2> pred_px, std::span<const Vec2> truth_px,
                         double pixel_pitch_mm = kPixelPitchMm);

struct PrecisionRecall {
  std::optional<double> precision;  ///< unset when there are no predictions
  double recall = 0.0;
};

/// Throws EmptyInput for an empty truth set.
PrecisionRecall precision_recall(std::span<const Vec2> pred_px, std::span<const Vec2> truth_px,
                                 double thresh_mm = 1.0, double pixel_pitch_mm = kPixelPitchMm);

inline bool success(double mrpd_mm) { return mrpd_mm <= 1.0; }

struct MetricReport {
  std::map<std::string, double> mrpd_per_view_mm;
  double mrpd_mm = 0.0;  ///< mean over control views
  double chamfer_mm = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool success = false;
  std::uint64_t seed = 0;
  Vec6 init = Vec6::Zero();  ///< tx, ty, tz (mm), phi, theta, psi (deg)
  MatchMode mode = MatchMode::Substructure;
};

/// mRPD, Chamfer and precision/recall of `pose` against the scene's truth
/// outlines in the control views. Throws InvalidArgument for a missing
/// control view or truth outline, or when a control view is also a
/// registration view.
MetricReport evaluate_pose(const SilhouetteExtractor& extractor, const Scene& scene, const RigidPose& pose,
                           const std::vector<std::string>& control_views,
                           double sample_spacing_mm = kDefaultSampleSpacingMm);

nlohmann::json metrics_to_json(const MetricReport& m);

struct SweepOptions {
  int n_runs = 50;
  double translation_range_mm = 50.0;
  double rotation_range_deg = 180.0;
  bool restart = false;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::vector<std::string> registration_views;  ///< empty: scene defaults
  std::vector<std::string> control_views;       ///< empty: scene defaults
};

struct SweepRun {
  int index = 0;
  MetricReport metrics;
  int restart_count = 0;
  bool converged = false;
  int updates = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;

  int successes() const;
  /// Unset for an empty sweep.
  std::optional<double> success_rate() const;
};

/// Initial perturbations (tx, ty, tz, phi, theta, psi) drawn uniformly in the
/// given ranges, applied in the mesh's principal frame around the truth.
std::vector<Vec6> sample_initial_perturbations(int n, double translation_range_mm, double rotation_range_deg,
                                               std::uint64_t seed);

RigidPose apply_perturbation(const RigidPose& truth, const PrincipalFrame& frame, const Vec6& init);

/// Independent registrations from random initial poses around the scene's
/// ground truth. Runs are seeded from (seed, index) and results are ordered
/// by index regardless of `jobs`. Per-run failures are recorded as
/// unsuccessful runs, not thrown.
SweepResult robustness_sweep(const LabeledMesh& mesh, const Scene& scene, const RegistrationConfig& config,
                             const SweepOptions& options);

/// Header plus one row per run.
void write_sweep_csv(std::ostream& out, const SweepResult& result);
/// One TSV per initial parameter (x = initial value, y = mRPD mm) in `dir`.
void write_plot_data(const std::filesystem::path& dir, const SweepResult& result);
nlohmann::json sweep_summary_json(const SweepResult& result);

struct FriedmanResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::vector<double> rank_sums;  ///< per method
};

/// Friedman chi-square over a k methods x n blocks matrix with average ranks
/// for ties and the usual tie correction; p from chi-square with k - 1 dof.
/// Blocks that are entirely tied carry no information: all-tied input gives
/// statistic 0 and p = 1. Throws InvalidArgument for k < 2 or n < 2 and
/// DegenerateRanks for non-finite scores.
FriedmanResult friedman_test(const Eigen::MatrixXd& scores);

}  // namespace contreg
