#include "contreg/registration.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>

#include "contreg/error.hpp"
#include "contreg/kdtree.hpp"

namespace contreg {

std::string to_string(MatchMode mode) {
  return mode == MatchMode::Substructure ? "substructure" : "silhouette";
}

MatchMode parse_match_mode(const std::string& s) {
  if (s == "substructure") return MatchMode::Substructure;
  if (s == "silhouette") return MatchMode::SilhouetteOnly;
  throw Error(ErrorCode::InvalidArgument, "mode must be 'substructure' or 'silhouette', got '" + s + "'");
}

void RegistrationConfig::validate() const {
  const bool ok = max_correspondence_updates > 0 && lm_max_iters > 0 && max_reweight_rounds > 0 &&
                  reweight_sigma_factor > 0.0 &&
                  restart_check_after_updates > 0 && restart_median_thresh_mm > 0.0 &&
                  restart_psi_min_deg > 0.0 && restart_psi_max_deg >= restart_psi_min_deg &&
                  max_restarts >= 0 && sample_spacing_mm > 0.0;
  if (!ok) throw Error(ErrorCode::InvalidArgument, "registration thresholds and counts must be positive");
}

std::vector<ViewData> collect_views(const Scene& scene, const std::vector<std::string>& ids) {
  const auto cams = scene.cameras(ids);
  const auto obs = scene.observations_for(ids);
  std::vector<ViewData> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({cams[i], obs[i]});
  return out;
}

namespace {

struct ProjectedClass {
  std::vector<Vec2> uv;
  std::vector<int> sample;
  KdTree2 tree;
};

bool excluded_at(const std::vector<std::vector<bool>>& excluded, std::size_t v, std::size_t i) {
  return v < excluded.size() && i < excluded[v].size() && excluded[v][i];
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  const double hi = xs[mid];
  if (xs.size() % 2 == 1) return hi;
  return 0.5 * (*std::max_element(xs.begin(), xs.begin() + mid) + hi);
}

}  // namespace

std::vector<Correspondence> match_correspondences(const SilhouetteExtractor& extractor,
                                                  const RigidPose& pose,
                                                  const std::vector<ViewData>& views,
                                                  const RegistrationConfig& config,
                                                  const std::vector<std::vector<bool>>& excluded) {
  const bool merged = config.mode == MatchMode::SilhouetteOnly;
  const SilhouetteMode smode = merged ? SilhouetteMode::WholeBone : SilhouetteMode::PerClass;
  std::vector<Correspondence> out;

  for (std::size_t v = 0; v < views.size(); ++v) {
    const CameraView& cam = views[v].camera;
    const ContourObservation obs = merged ? views[v].observation.merged() : views[v].observation;
    const auto samples = extractor.extract(pose, cam, config.sample_spacing_mm, smode);

    std::map<ClassId, ProjectedClass> by_class;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto uv = try_project(cam.extrinsic.apply(pose.apply(samples[s].position)), cam.intrinsics);
      if (!uv) continue;
      auto& pc = by_class[merged ? kUnlabeled : samples[s].class_id];
      pc.uv.push_back(*uv);
      pc.sample.push_back(static_cast<int>(s));
    }
    for (auto& [cls, pc] : by_class) pc.tree = KdTree2(pc.uv);

    int flat = 0;
    for (const auto& [cls, pts] : obs.points_by_class) {
      if (!merged && !is_substructure(cls)) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("class {} contour in view {} needs silhouette mode", cls, cam.view_id));
      }
      if (pts.empty()) continue;
      const auto it = by_class.find(cls);
      if (it == by_class.end() || it->second.tree.empty()) {
        throw Error(ErrorCode::EmptySilhouette, fmt::format("class {} in view {}", cls, cam.view_id));
      }
      const ProjectedClass& pc = it->second;
      for (const Vec2& p : pts) {
        const int idx = flat++;
        if (excluded_at(excluded, v, static_cast<std::size_t>(idx))) continue;
        const auto hit = pc.tree.nearest(p);
        const SilhouetteSample& s = samples[pc.sample[hit.index]];
        Correspondence c;
        c.view_id = cam.view_id;
        c.view_index = static_cast<int>(v);
        c.observation_index = idx;
        c.observed_2d = p;
        c.model_point_3d = s.position;
        c.class_id = cls;
        c.source_edge = s.source_edge;
        c.residual_px = std::sqrt(hit.squared_distance);
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

namespace {

/// Fills residuals and per-correspondence norms; false when a point is
/// behind a camera.
bool reprojection_residuals(const std::vector<Correspondence>& corr, const std::vector<ViewData>& views,
                            const RigidPose& pose, Eigen::VectorXd& r) {
  int active = 0;
  for (const auto& c : corr) active += c.weight;
  r.resize(2 * active);
  int row = 0;
  for (const auto& c : corr) {
    if (c.weight == 0) continue;
    const CameraView& cam = views[c.view_index].camera;
    const auto uv = try_project(cam.extrinsic.apply(pose.apply(c.model_point_3d)), cam.intrinsics);
    if (!uv) return false;
    r.segment<2>(row) = *uv - c.observed_2d;
    row += 2;
  }
  return true;
}

void update_residuals(std::vector<Correspondence>& corr, const std::vector<ViewData>& views,
                      const RigidPose& pose) {
  for (auto& c : corr) {
    const CameraView& cam = views[c.view_index].camera;
    c.residual_px = (project(pose.apply(c.model_point_3d), cam) - c.observed_2d).norm();
  }
}

}  // namespace

LmResult solve_pose_lm(const std::vector<Correspondence>& corr, const std::vector<ViewData>& views,
                       const RigidPose& pose0, const Vec3& pivot_model, const RegistrationConfig& config) {
  int active = 0;
  for (const auto& c : corr) active += c.weight;
  if (active < 3) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("{} active correspondences, need 3", active));
  }
  LmOptions opts;
  opts.max_iterations = config.lm_max_iters;
  const PoseResidualFn fn = [&](const RigidPose& p, Eigen::VectorXd& r) {
    return reprojection_residuals(corr, views, p, r);
  };
  return optimize_pose(fn, pose0, pivot_model, opts);
}

namespace {

struct AttemptResult {
  RigidPose pose;
  bool converged = false;
  bool restart_requested = false;
  double final_median_mm = std::numeric_limits<double>::infinity();
  int excluded_count = 0;
};

class Registrar {
 public:
  Registrar(const LabeledMesh& mesh, const std::vector<ViewData>& views, const RegistrationConfig& config)
      : extractor_(mesh), views_(views), config_(config), frame_(principal_frame(mesh)) {
    config_.validate();
    if (views_.empty()) throw Error(ErrorCode::InvalidArgument, "registration needs at least one view");
  }

  const PrincipalFrame& frame() const { return frame_; }

  AttemptResult run(const RigidPose& init, int attempt, bool check_restart, RegistrationReport& report) {
    AttemptResult res;
    RigidPose pose = init;
    std::vector<std::vector<bool>> excluded(views_.size());
    for (std::size_t v = 0; v < views_.size(); ++v) {
      excluded[v].assign(views_[v].observation.total_points(), false);
    }
    int phase = 1;
    int phase_updates = 0;
    bool first_loop_stable = true;
    double loop_median = 0.0;
    int rounds = 0;
    std::vector<int> previous_edges;
    std::vector<Correspondence> corr;
    const auto edges_of = [](const std::vector<Correspondence>& cs) {
      std::vector<int> e;
      e.reserve(cs.size());
      for (const auto& c : cs) e.push_back(c.source_edge);
      return e;
    };

    for (;;) {
      corr = match_correspondences(extractor_, pose, views_, config_, excluded);
      std::vector<int> edges = edges_of(corr);
      const bool stable = phase_updates > 0 && edges == previous_edges;
      const bool exhausted = phase_updates >= config_.max_correspondence_updates;
      if (stable || exhausted) {
        if (!config_.reweight) {
          res.converged = stable;
          break;
        }
        const bool entering = phase == 1;
        if (entering) {
          first_loop_stable = stable;
          loop_median = report.trace.empty() ? 0.0 : report.trace.back().median_residual_mm;
          phase = 2;
        } else if (rounds >= config_.max_reweight_rounds) {
          res.converged = stable && first_loop_stable;
          break;
        }
        // sigma over the points still in play, so each round tightens
        const int newly = reweight(corr, excluded);
        ++rounds;
        res.excluded_count += newly;
        if (!entering && newly == 0) {
          res.converged = stable && first_loop_stable;
          break;
        }
        phase_updates = 0;
        corr = match_correspondences(extractor_, pose, views_, config_, excluded);
        edges = edges_of(corr);
      }

      const LmResult lm = solve_pose_lm(corr, views_, pose, frame_.centroid, config_);
      pose = lm.pose;
      update_residuals(corr, views_, pose);
      report.trace.push_back(trace_entry(corr, pose, lm, attempt, phase));
      report.total_lm_iterations += lm.iterations;
      previous_edges = std::move(edges);
      ++phase_updates;

      if (check_restart && config_.restart_trigger == RestartTrigger::AfterUpdates && phase == 1 &&
          phase_updates == config_.restart_check_after_updates &&
          report.trace.back().median_residual_mm > config_.restart_median_thresh_mm) {
        res.restart_requested = true;
        break;
      }
    }
    res.pose = pose;
    // Judged over every observed point: a pose that fits only the points it
    // kept must not look good.
    res.final_median_mm = std::max(loop_median, median_residual_mm(match_correspondences(extractor_, pose, views_, config_)));
    if (check_restart && res.final_median_mm > config_.restart_median_thresh_mm) res.restart_requested = true;
    return res;
  }

 private:
  /// Zero-centred sigma over the residual norms of the current
  /// correspondences; marks points beyond factor * sigma as excluded for the
  /// rest of the run.
  int reweight(std::vector<Correspondence>& corr, std::vector<std::vector<bool>>& excluded) const {
    double sum_sq = 0.0;
    for (const auto& c : corr) sum_sq += c.residual_px * c.residual_px;
    const double sigma = std::sqrt(sum_sq / static_cast<double>(std::max<std::size_t>(1, corr.size())));
    int removed = 0;
    for (auto& c : corr) {
      if (c.residual_px > config_.reweight_sigma_factor * sigma) {
        c.weight = 0;
        excluded[c.view_index][c.observation_index] = true;
        ++removed;
      }
    }
    return removed;
  }

  double median_residual_mm(const std::vector<Correspondence>& corr) const {
    std::vector<double> mm;
    mm.reserve(corr.size());
    for (const auto& c : corr) mm.push_back(c.residual_px * views_[c.view_index].camera.object_mm_per_px());
    return median_of(std::move(mm));
  }

  TraceEntry trace_entry(const std::vector<Correspondence>& corr, const RigidPose& pose, const LmResult& lm,
                         int attempt, int phase) const {
    TraceEntry e;
    e.attempt = attempt;
    e.phase = phase;
    e.pose = pose;
    e.lm_iterations = lm.iterations;
    e.lm_costs = lm.cost_history;
    std::vector<double> mm;
    mm.reserve(corr.size());
    double sum = 0.0;
    for (const auto& c : corr) {
      if (c.weight == 0) continue;
      mm.push_back(c.residual_px * views_[c.view_index].camera.object_mm_per_px());
      sum += mm.back();
    }
    e.inlier_count = static_cast<int>(mm.size());
    e.mean_residual_mm = mm.empty() ? 0.0 : sum / static_cast<double>(mm.size());
    e.median_residual_mm = median_of(std::move(mm));
    return e;
  }

  SilhouetteExtractor extractor_;
  const std::vector<ViewData>& views_;
  RegistrationConfig config_;
  PrincipalFrame frame_;
};

}  // namespace

RegistrationReport register_contours(const LabeledMesh& mesh, const std::vector<ViewData>& views,
                                     const RigidPose& initial_pose, const RegistrationConfig& config) {
  Registrar reg(mesh, views, config);
  RegistrationReport report;
  report.mode = config.mode;
  const AttemptResult res = reg.run(initial_pose, 0, false, report);
  report.final_pose = res.pose;
  report.converged = res.converged;
  report.final_median_residual_mm = res.final_median_mm;
  report.excluded_count = res.excluded_count;
  return report;
}

RegistrationReport register_with_restart(const LabeledMesh& mesh, const std::vector<ViewData>& views,
                                         const RigidPose& initial_pose, const RegistrationConfig& config) {
  Registrar reg(mesh, views, config);
  RegistrationReport report;
  report.mode = config.mode;
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> psi(config.restart_psi_min_deg, config.restart_psi_max_deg);

  RigidPose start = initial_pose;
  std::optional<AttemptResult> best;
  for (int attempt = 0;; ++attempt) {
    AttemptResult res = reg.run(start, attempt, true, report);
    if (!best || res.final_median_mm < best->final_median_mm) best = res;
    if (!res.restart_requested) {
      best = res;
      break;
    }
    if (attempt == config.max_restarts) {
      // Exhausted: keep the attempt with the lowest final median residual.
      best->converged = false;
      break;
    }
    report.restart_count = attempt + 1;
    const RigidPose f = reg.frame().to_model();
    start = res.pose * f * euler_to_pose(0.0, 0.0, psi(rng), Vec3::Zero()) * f.inverse();
  }
  report.final_pose = best->pose;
  report.converged = best->converged;
  report.final_median_residual_mm = best->final_median_mm;
  report.excluded_count = best->excluded_count;
  return report;
}

nlohmann::json report_to_json(const RegistrationReport& report, const RegistrationConfig& config) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : report.trace) {
    trace.push_back({{"attempt", e.attempt},
                     {"phase", e.phase},
                     {"median_residual_mm", e.median_residual_mm},
                     {"mean_residual_mm", e.mean_residual_mm},
                     {"inlier_count", e.inlier_count},
                     {"lm_iterations", e.lm_iterations},
                     {"lm_cost_initial", e.lm_costs.empty() ? 0.0 : e.lm_costs.front()},
                     {"lm_cost_final", e.lm_costs.empty() ? 0.0 : e.lm_costs.back()},
                     {"pose", pose_to_json(e.pose)}});
  }
  return {{"format", "contreg-report/1"},
          {"mode", to_string(report.mode)},
          {"final_pose", pose_to_json(report.final_pose)},
          {"converged", report.converged},
          {"restart_count", report.restart_count},
          {"total_lm_iterations", report.total_lm_iterations},
          {"final_median_residual_mm", report.final_median_residual_mm},
          {"excluded_correspondences", report.excluded_count},
          {"residual_mm_convention", "pixel_pitch * source_object / source_detector"},
          {"config",
           {{"max_correspondence_updates", config.max_correspondence_updates},
            {"lm_max_iters", config.lm_max_iters},
            {"reweight", config.reweight},
            {"reweight_sigma_factor", config.reweight_sigma_factor},
            {"max_reweight_rounds", config.max_reweight_rounds},
            {"restart_trigger", config.restart_trigger == RestartTrigger::FinalMedian ? "final_median" : "after_updates"},
            {"restart_check_after_updates", config.restart_check_after_updates},
            {"restart_median_thresh_mm", config.restart_median_thresh_mm},
            {"restart_psi_range_deg", {config.restart_psi_min_deg, config.restart_psi_max_deg}},
            {"max_restarts", config.max_restarts},
            {"sample_spacing_mm", config.sample_spacing_mm},
            {"rng_seed", config.rng_seed}}},
          {"trace", trace}};
}

RigidPose report_final_pose(const nlohmann::json& j) {
  try {
    return pose_from_json(j.at("final_pose"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

}  // namespace contreg
