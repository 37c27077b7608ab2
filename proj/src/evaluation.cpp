#include "contreg/evaluation.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include "contreg/error.hpp"
#include "contreg/kdtree.hpp"

namespace contreg {

namespace {

double mean_nearest_px(std::span<const Vec2> from, std::span<const Vec2> to) {
  const KdTree2 tree(to);
  double sum = 0.0;
  for (const Vec2& p : from) sum += std::sqrt(tree.nearest(p).squared_distance);
  return sum / static_cast<double>(from.size());
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double mrpd(std::span<const Vec2> gt_contour_px, std::span<const Vec3> model_points, const RigidPose& pose,
            const CameraView& control_view) {
  if (gt_contour_px.empty() || model_points.empty()) {
    throw Error(ErrorCode::EmptyInput, "mRPD needs ground-truth and model points");
  }
  std::vector<Vec2> reproj;
  reproj.reserve(model_points.size());
  for (const Vec3& x : model_points) reproj.push_back(project(pose.apply(x), control_view));
  return mean_nearest_px(gt_contour_px, reproj) * control_view.intrinsics.pixel_pitch;
}

std::vector<Vec2> reprojected_outline(const SilhouetteExtractor& extractor, const RigidPose& pose,
                                      const CameraView& view, double sample_spacing_mm) {
  std::vector<Vec2> out;
  for (const auto& s : extractor.extract(pose, view, sample_spacing_mm, SilhouetteMode::WholeBone)) {
    out.push_back(project(pose.apply(s.position), view));
  }
  return out;
}

double one_sided_chamfer(std::span<const Vec2> pred_px, std::span<const Vec2> truth_px, double pixel_pitch_mm) {
  if (pred_px.empty() || truth_px.empty()) throw Error(ErrorCode::EmptyInput, "Chamfer needs two point sets");
  return mean_nearest_px(pred_px, truth_px) * pixel_pitch_mm;
}

PrecisionRecall precision_recall(std::span<const Vec2> pred_px, std::span<const Vec2> truth_px,
                                 double thresh_mm, double pixel_pitch_mm) {
  if (truth_px.empty()) throw Error(ErrorCode::EmptyInput, "precision/recall needs a truth set");
  PrecisionRecall pr;
  if (pred_px.empty()) return pr;
  const double t2 = (thresh_mm / pixel_pitch_mm) * (thresh_mm / pixel_pitch_mm);
  const KdTree2 truth_tree(truth_px);
  std::size_t tp = 0;
  for (const Vec2& p : pred_px) tp += truth_tree.nearest(p).squared_distance <= t2;
  const KdTree2 pred_tree(pred_px);
  std::size_t found = 0;
  for (const Vec2& q : truth_px) found += pred_tree.nearest(q).squared_distance <= t2;
  pr.precision = static_cast<double>(tp) / static_cast<double>(pred_px.size());
  pr.recall = static_cast<double>(found) / static_cast<double>(truth_px.size());
  return pr;
}

MetricReport evaluate_pose(const SilhouetteExtractor& extractor, const Scene& scene, const RigidPose& pose,
                           const std::vector<std::string>& control_views, double sample_spacing_mm) {
  if (control_views.empty()) throw Error(ErrorCode::InvalidArgument, "no control views");
  MetricReport m;
  for (const auto& id : control_views) {
    if (std::find(scene.registration_views.begin(), scene.registration_views.end(), id) !=
        scene.registration_views.end()) {
      throw Error(ErrorCode::InvalidArgument, "control view '" + id + "' is a registration view");
    }
    const auto truth_it = scene.truth_outlines.find(id);
    if (truth_it == scene.truth_outlines.end()) {
      throw Error(ErrorCode::InvalidArgument, "no ground-truth outline for view '" + id + "'");
    }
    const CameraView cam = scene.cameras({id}).front();
    const auto& truth = truth_it->second;
    const auto pred = reprojected_outline(extractor, pose, cam, sample_spacing_mm);
    if (pred.empty() || truth.empty()) throw Error(ErrorCode::EmptyInput, "empty outline in view '" + id + "'");
    const double pitch = cam.intrinsics.pixel_pitch;
    const double d = mean_nearest_px(truth, pred) * pitch;
    m.mrpd_per_view_mm[id] = d;
    m.mrpd_mm += d;
    m.chamfer_mm += one_sided_chamfer(pred, truth, pitch);
    const auto pr = precision_recall(pred, truth, 1.0, pitch);
    m.precision += pr.precision.value_or(0.0);
    m.recall += pr.recall;
  }
  const double n = static_cast<double>(control_views.size());
  m.mrpd_mm /= n;
  m.chamfer_mm /= n;
  m.precision /= n;
  m.recall /= n;
  m.success = success(m.mrpd_mm);
  return m;
}

nlohmann::json metrics_to_json(const MetricReport& m) {
  const auto finite_or_null = [](double x) -> nlohmann::json {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
  };
  nlohmann::json per_view = nlohmann::json::object();
  for (const auto& [id, d] : m.mrpd_per_view_mm) per_view[id] = finite_or_null(d);
  return {{"mrpd_mm", finite_or_null(m.mrpd_mm)},
          {"mrpd_per_view_mm", per_view},
          {"mrpd_pairing", "truth_to_reprojection_nearest"},
          {"chamfer_mm", finite_or_null(m.chamfer_mm)},
          {"precision_at_1mm", m.precision},
          {"recall_at_1mm", m.recall},
          {"success", m.success},
          {"seed", m.seed},
          {"init", {m.init[0], m.init[1], m.init[2], m.init[3], m.init[4], m.init[5]}},
          {"mode", to_string(m.mode)}};
}

int SweepResult::successes() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const SweepRun& r) { return r.metrics.success; }));
}

std::optional<double> SweepResult::success_rate() const {
  if (runs.empty()) return std::nullopt;
  return static_cast<double>(successes()) / static_cast<double>(runs.size());
}

std::vector<Vec6> sample_initial_perturbations(int n, double translation_range_mm, double rotation_range_deg,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> t(-translation_range_mm, translation_range_mm);
  std::uniform_real_distribution<double> r(-rotation_range_deg, rotation_range_deg);
  std::vector<Vec6> out;
  for (int i = 0; i < n; ++i) {
    Vec6 v;
    for (int k = 0; k < 3; ++k) v[k] = t(rng);
    for (int k = 3; k < 6; ++k) v[k] = r(rng);
    out.push_back(v);
  }
  return out;
}

RigidPose apply_perturbation(const RigidPose& truth, const PrincipalFrame& frame, const Vec6& init) {
  const RigidPose f = frame.to_model();
  return truth * f * euler_to_pose(init[3], init[4], init[5], init.head<3>()) * f.inverse();
}

SweepResult robustness_sweep(const LabeledMesh& mesh, const Scene& scene, const RegistrationConfig& config,
                             const SweepOptions& options) {
  if (options.n_runs < 0) throw Error(ErrorCode::InvalidArgument, "negative run count");
  if (!scene.ground_truth_pose) throw Error(ErrorCode::InvalidArgument, "sweep needs a ground-truth pose");
  config.validate();
  const auto reg_ids = options.registration_views.empty() ? scene.registration_views : options.registration_views;
  const auto ctl_ids = options.control_views.empty() ? scene.control_views : options.control_views;
  Scene eval_scene = scene;
  eval_scene.registration_views = reg_ids;

  const std::vector<ViewData> views = collect_views(scene, reg_ids);
  const SilhouetteExtractor extractor(mesh);
  const PrincipalFrame frame = principal_frame(mesh);
  const auto inits =
      sample_initial_perturbations(options.n_runs, options.translation_range_mm, options.rotation_range_deg, options.seed);

  SweepResult result;
  result.runs.resize(inits.size());
  const auto run_one = [&](std::size_t i) {
    SweepRun& run = result.runs[i];
    run.index = static_cast<int>(i);
    RegistrationConfig cfg = config;
    cfg.rng_seed = splitmix64(options.seed ^ splitmix64(i));
    const RigidPose init = apply_perturbation(*scene.ground_truth_pose, frame, inits[i]);
    try {
      const RegistrationReport rep = options.restart ? register_with_restart(mesh, views, init, cfg)
                                                     : register_contours(mesh, views, init, cfg);
      run.metrics = evaluate_pose(extractor, eval_scene, rep.final_pose, ctl_ids, cfg.sample_spacing_mm);
      run.restart_count = rep.restart_count;
      run.converged = rep.converged;
      run.updates = static_cast<int>(rep.trace.size());
    } catch (const Error&) {
      run.metrics = MetricReport{};
      run.metrics.mrpd_mm = std::numeric_limits<double>::infinity();
      run.metrics.chamfer_mm = std::numeric_limits<double>::infinity();
      run.metrics.success = false;
    }
    run.metrics.seed = cfg.rng_seed;
    run.metrics.init = inits[i];
    run.metrics.mode = cfg.mode;
  };

  const int jobs = std::clamp(options.jobs, 1, std::max(1, options.n_runs));
  if (jobs == 1) {
    for (std::size_t i = 0; i < inits.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < inits.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "run,tx_mm,ty_mm,tz_mm,phi_deg,theta_deg,psi_deg,mrpd_mm,success,restarts,converged,updates\n";
  for (const auto& r : result.runs) {
    const Vec6& v = r.metrics.init;
    fmt::print(out, "{},{},{},{},{},{},{},{},{},{},{},{}\n", r.index, v[0], v[1], v[2], v[3], v[4], v[5],
               r.metrics.mrpd_mm, r.metrics.success ? 1 : 0, r.restart_count, r.converged ? 1 : 0, r.updates);
  }
}

void write_plot_data(const std::filesystem::path& dir, const SweepResult& result) {
  static constexpr const char* kNames[6] = {"tx_mm", "ty_mm", "tz_mm", "phi_deg", "theta_deg", "psi_deg"};
  std::filesystem::create_directories(dir);
  for (int k = 0; k < 6; ++k) {
    std::ofstream out(dir / fmt::format("plot_{}.tsv", kNames[k]));
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write plot data in " + dir.string());
    fmt::print(out, "{}\tmrpd_mm\tsuccess\n", kNames[k]);
    for (const auto& r : result.runs) {
      fmt::print(out, "{}\t{}\t{}\n", r.metrics.init[k], r.metrics.mrpd_mm, r.metrics.success ? 1 : 0);
    }
  }
}

nlohmann::json sweep_summary_json(const SweepResult& result) {
  nlohmann::json j = {{"runs", result.runs.size()}, {"successes", result.successes()}};
  const auto rate = result.success_rate();
  j["success_rate"] = rate ? nlohmann::json(*rate) : nlohmann::json(nullptr);
  double max_mrpd = 0.0, sum = 0.0;
  int finite = 0, restarted = 0, within_two_runs = 0;
  for (const auto& r : result.runs) {
    if (std::isfinite(r.metrics.mrpd_mm)) {
      max_mrpd = std::max(max_mrpd, r.metrics.mrpd_mm);
      sum += r.metrics.mrpd_mm;
      ++finite;
    }
    restarted += r.restart_count > 0;
    within_two_runs += r.restart_count <= 1;
  }
  j["max_mrpd_mm"] = finite == static_cast<int>(result.runs.size()) && finite > 0 ? nlohmann::json(max_mrpd)
                                                                                   : nlohmann::json(nullptr);
  j["mean_mrpd_mm"] = finite > 0 ? nlohmann::json(sum / finite) : nlohmann::json(nullptr);
  j["runs_with_restart"] = restarted;
  j["runs_within_two_attempts"] = within_two_runs;
  j["mrpd_pairing"] = "truth_to_reprojection_nearest";
  return j;
}

FriedmanResult friedman_test(const Eigen::MatrixXd& scores) {
  const Eigen::Index k = scores.rows(), n = scores.cols();
  if (k < 2 || n < 2) throw Error(ErrorCode::InvalidArgument, "Friedman test needs k >= 2 methods and n >= 2 blocks");
  if (!scores.allFinite()) throw Error(ErrorCode::DegenerateRanks, "non-finite score");

  FriedmanResult res;
  res.rank_sums.assign(static_cast<std::size_t>(k), 0.0);
  double tie_sum = 0.0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return scores(x, b) < scores(y, b); });
    for (Eigen::Index lo = 0; lo < k;) {
      Eigen::Index hi = lo + 1;
      while (hi < k && scores(order[hi], b) == scores(order[lo], b)) ++hi;
      const double avg = 0.5 * static_cast<double>(lo + 1 + hi);
      for (Eigen::Index i = lo; i < hi; ++i) res.rank_sums[order[i]] += avg;
      const double t = static_cast<double>(hi - lo);
      tie_sum += t * t * t - t;
      lo = hi;
    }
  }
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  const double correction = 1.0 - tie_sum / (nd * kd * (kd * kd - 1.0));
  if (correction <= 0.0) return res;  // every block fully tied

  double ss = 0.0;
  for (double r : res.rank_sums) ss += r * r;
  const double chi2 = (12.0 / (nd * kd * (kd + 1.0)) * ss - 3.0 * nd * (kd + 1.0)) / correction;
  res.statistic = std::max(0.0, chi2);
  res.p_value = boost::math::gamma_q(0.5 * (kd - 1.0), 0.5 * res.statistic);
  return res;
}

}  // namespace contreg
