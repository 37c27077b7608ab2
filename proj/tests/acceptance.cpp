// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Runtime bounds are part of each criterion.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "contreg/calibration.hpp"
#include "contreg/evaluation.hpp"
#include "contreg/kdtree.hpp"
#include "contreg/lm.hpp"
#include "contreg/registration.hpp"
#include "contreg/synth.hpp"

using namespace contreg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

/// Fixed start: +30, -40, +5 mm and small rotations.
Vec6 fixed_start() {
  Vec6 v;
  v << 30, -40, 5, -17.18, 0, 17.18;
  return v;
}

// ---------------------------------------------------------------------------

Outcome closed_loop() {
  const auto t0 = Clock::now();
  const LabeledMesh mesh = build_phantom(PhantomSpec::standard());
  const RigidPose truth = default_true_pose(mesh);
  const Scene scene = generate_scene(mesh, CameraRingSpec{}, truth, NoiseSpec{}, std::nullopt);
  const auto rep = register_contours(mesh, collect_views(scene, scene.registration_views), truth, RegistrationConfig{});
  const double m = evaluate_pose(SilhouetteExtractor(mesh), scene, rep.final_pose, scene.control_views).mrpd_mm;
  const double dt = seconds_since(t0);
  return {m < 1e-6 && dt < 5.0, fmt::format("mRPD {:.2e} mm, {:.1f} s", m, dt)};
}

Outcome fixed_init() {
  const auto t0 = Clock::now();
  int ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 30; ++i) {
    const LabeledMesh mesh = build_phantom(PhantomSpec::varied(100 + i));
    const RigidPose truth = default_true_pose(mesh);
    const Scene scene =
        generate_scene(mesh, CameraRingSpec{}, truth, NoiseSpec{0.5, 0, 0, 0, 200ull + i}, std::nullopt);
    const RigidPose init = apply_perturbation(truth, principal_frame(mesh), fixed_start());
    const auto rep = register_contours(mesh, collect_views(scene, scene.registration_views), init, RegistrationConfig{});
    const auto m = evaluate_pose(SilhouetteExtractor(mesh), scene, rep.final_pose, scene.control_views);
    ok += m.success;
    worst = std::max(worst, m.mrpd_mm);
  }
  const double dt = seconds_since(t0);
  return {ok >= 29 && dt < 600.0, fmt::format("{}/30 successful, max mRPD {:.3f} mm, {:.1f} s", ok, worst, dt)};
}

/// Shared by criteria 3 and 4: moderate noise on the standard phantom.
struct SweepSetup {
  LabeledMesh mesh = build_phantom(PhantomSpec::standard());
  Scene scene = generate_scene(mesh, CameraRingSpec{}, default_true_pose(mesh), NoiseSpec{0.5, 0.05, 0.05, 0.0, 7},
                               std::nullopt);

  SweepResult run(MatchMode mode, bool restart) const {
    RegistrationConfig cfg;
    cfg.mode = mode;
    SweepOptions so;
    so.n_runs = 50;
    so.seed = 11;
    so.restart = restart;
    return robustness_sweep(mesh, scene, cfg, so);
  }
};

const SweepSetup& sweep_setup() {
  static const SweepSetup s;
  return s;
}

std::optional<SweepResult> plain_sweep;

Outcome robustness() {
  const auto t0 = Clock::now();
  plain_sweep = sweep_setup().run(MatchMode::Substructure, false);
  const SweepResult with = sweep_setup().run(MatchMode::Substructure, true);
  double worst = 0.0;
  int within_two = 0;
  for (const auto& r : with.runs) {
    worst = std::max(worst, r.metrics.mrpd_mm);
    within_two += r.restart_count <= 1;
  }
  const double dt = seconds_since(t0);
  const int n = static_cast<int>(with.runs.size());
  const bool pass = *plain_sweep->success_rate() >= 0.85 && with.successes() == n && worst <= 1.0 &&
                    within_two >= 0.9 * n && dt < 1800.0;
  return {pass, fmt::format("without restart {}/{}; with restart {}/{}, max mRPD {:.3f} mm, <= 2 runs in {}/{}; {:.1f} s",
                            plain_sweep->successes(), plain_sweep->runs.size(), with.successes(), n, worst,
                            within_two, n, dt)};
}

Outcome substructure_advantage() {
  if (!plain_sweep) plain_sweep = sweep_setup().run(MatchMode::Substructure, false);
  const SweepResult sil = sweep_setup().run(MatchMode::SilhouetteOnly, false);
  const double gap = *plain_sweep->success_rate() - *sil.success_rate();
  return {gap >= 0.30, fmt::format("substructure {:.0f}%, silhouette-only {:.0f}%, gap {:.0f} points",
                                   100 * *plain_sweep->success_rate(), 100 * *sil.success_rate(), 100 * gap)};
}

Outcome reweighting_ablation() {
  const LabeledMesh mesh = build_phantom(PhantomSpec::standard());
  const RigidPose truth = default_true_pose(mesh);
  const PrincipalFrame frame = principal_frame(mesh);
  const SilhouetteExtractor ex(mesh);
  const auto inits = sample_initial_perturbations(10, 50, 180, 5);
  double sum_on = 0.0, sum_off = 0.0;
  int positive = 0;
  for (int i = 0; i < 10; ++i) {
    const Scene scene =
        generate_scene(mesh, CameraRingSpec{}, truth, NoiseSpec{0.5, 0.1, 0, 0, 300ull + i}, std::nullopt);
    const auto views = collect_views(scene, scene.registration_views);
    RegistrationConfig on, off;
    off.reweight = false;
    const RigidPose init = apply_perturbation(truth, frame, inits[i]);
    const double a = evaluate_pose(ex, scene, register_contours(mesh, views, init, on).final_pose,
                                   scene.control_views).mrpd_mm;
    const double b = evaluate_pose(ex, scene, register_contours(mesh, views, init, off).final_pose,
                                   scene.control_views).mrpd_mm;
    sum_on += a;
    sum_off += b;
    positive += b > a;
  }
  return {sum_on < sum_off && positive >= 8,
          fmt::format("mean mRPD {:.3f} mm with, {:.3f} mm without; gap positive in {}/10", sum_on / 10,
                      sum_off / 10, positive)};
}

Outcome single_vs_multi() {
  const LabeledMesh mesh = build_phantom(PhantomSpec::mirror_symmetric());
  const RigidPose truth = default_true_pose(mesh);
  const PrincipalFrame frame = principal_frame(mesh);
  const SilhouetteExtractor ex(mesh);
  const Scene scene = generate_scene(mesh, CameraRingSpec{}, truth, NoiseSpec{0.5, 0, 0, 0, 9}, std::nullopt);
  const auto inits = sample_initial_perturbations(10, 50, 180, 6);
  const auto one = collect_views(scene, {scene.registration_views.front()});
  const auto two = collect_views(scene, scene.registration_views);
  int single_failures = 0, multi_successes = 0;
  for (const auto& v : inits) {
    const RigidPose init = apply_perturbation(truth, frame, v);
    single_failures += !evaluate_pose(ex, scene, register_contours(mesh, one, init, RegistrationConfig{}).final_pose,
                                      scene.control_views).success;
    multi_successes += evaluate_pose(ex, scene, register_contours(mesh, two, init, RegistrationConfig{}).final_pose,
                                     scene.control_views).success;
  }
  return {single_failures >= 5 && multi_successes == 10,
          fmt::format("single view {}/10 failures, two views {}/10 successes", single_failures, multi_successes)};
}

Outcome calibration() {
  const auto t0 = Clock::now();
  const FiducialModel fid = default_fiducial();
  const BlindPnpOptions opts;
  std::mt19937_64 rng(77);
  int exact = 0, all_true = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    CameraRingSpec ring;
    ring.num_views = 1;
    ring.start_angle_deg = std::uniform_real_distribution<double>(0, 360)(rng);
    const CameraView cam = build_camera_ring(ring)[0];
    const SimulatedBeads sim = simulate_bead_detections(fid, cam, 0.3, BeadNoiseSpec{4, 3}, rng);
    const CalibrationResult res = blind_pnp(BeadDetections{sim.detections_px}, fid, cam.intrinsics, opts);
    // The exact assignment: every true pair that is an inlier under the
    // solved pose, and nothing else. A true bead whose noise pushes it past
    // the inlier threshold cannot be matched by any threshold-based method.
    std::set<std::pair<int, int>> got, want, truth;
    for (const auto& m : res.matching) got.insert({m.detection, m.bead_id});
    for (std::size_t d = 0; d < sim.truth_ids.size(); ++d) {
      const int b = sim.truth_ids[d];
      if (b < 0) continue;
      truth.insert({static_cast<int>(d), b});
      const Vec2 uv = project_camera_point(res.pose.apply(fid.bead_positions[b]), cam.intrinsics);
      if ((uv - sim.detections_px[d]).norm() <= opts.inlier_thresh_px) want.insert({static_cast<int>(d), b});
    }
    exact += got == want;
    all_true += got == truth;
    worst = std::max(worst, res.mean_reproj_err_px);
  }
  const double dt = seconds_since(t0);
  return {exact >= 98 && worst <= 0.8 && dt < 120.0,
          fmt::format("exact assignment in {}/100 views ({} also match every true bead), worst mean "
                      "reprojection {:.3f} px, {:.1f} s",
                      exact, all_true, worst, dt)};
}

// ---------------------------------------------------------------------------

Vec3 uniform_vec3(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

Outcome numerics() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Jacobian: projection residuals through a random camera.
  double worst_jac = 0.0;
  for (int i = 0; i < 100; ++i) {
    CameraView cam;
    cam.intrinsics.focal_px = 800 + 3200 * unit(rng);
    const Vec3 axis = uniform_vec3(rng, -1, 1).normalized();
    cam.extrinsic = RigidPose(so3_exp(axis * 3.0 * unit(rng)), Vec3(0, 0, 500 + 400 * unit(rng)));
    std::vector<Vec3> pts;
    const int n = 3 + static_cast<int>(28 * unit(rng));
    for (int k = 0; k < n; ++k) pts.push_back(uniform_vec3(rng, -60, 60));
    const PoseResidualFn fn = [&](const RigidPose& p, Eigen::VectorXd& r) {
      r.resize(2 * n);
      for (int k = 0; k < n; ++k) {
        const Vec3 pc = cam.extrinsic.apply(p.apply(pts[k]));
        if (pc.z() <= kMinDepthMm) return false;
        r.segment<2>(2 * k) = project_camera_point(pc, cam.intrinsics);
      }
      return true;
    };
    const RigidPose pose(so3_exp(uniform_vec3(rng, -0.35, 0.35)), uniform_vec3(rng, -20, 20));
    const Vec3 pivot = pose.apply(uniform_vec3(rng, -10, 10));
    Eigen::VectorXd r0, rp, rm;
    if (!fn(pose, r0)) return {false, "random configuration put a point behind the camera"};
    const PoseJacobian jf = forward_difference_jacobian(fn, pose, pivot, r0, LmOptions{});
    for (int k = 0; k < 6; ++k) {
      const double h = k < 3 ? 1e-5 : 1e-3;
      Vec6 d = Vec6::Zero();
      d[k] = h;
      fn(apply_increment(pose, d, pivot), rp);
      d[k] = -h;
      fn(apply_increment(pose, d, pivot), rm);
      const Eigen::VectorXd jc = (rp - rm) / (2 * h);
      worst_jac = std::max(worst_jac, (jf.col(k) - jc).lpNorm<Eigen::Infinity>() / jc.lpNorm<Eigen::Infinity>());
    }
  }

  // Nearest-neighbour structures against O(n^2) scans.
  double worst_nn = 0.0;
  auto brute_mean = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double s = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).norm());
      s += best;
    }
    return s / static_cast<double>(from.size());
  };
  auto brute_within = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to, double t) {
    int n = 0;
    for (const auto& p : from) {
      bool hit = false;
      for (const auto& q : to) hit = hit || (p - q).norm() <= t;
      n += hit;
    }
    return n;
  };
  bool nn_exact = true;
  for (int i = 0; i < 50; ++i) {
    const int n = 1 + static_cast<int>(499 * unit(rng)), m = 1 + static_cast<int>(499 * unit(rng));
    std::vector<Vec2> a, b;
    // a coarse grid forces distance ties
    for (int k = 0; k < n; ++k) a.push_back(Vec2(std::round(200 * unit(rng)), std::round(200 * unit(rng))));
    for (int k = 0; k < m; ++k) b.push_back(Vec2(200 * unit(rng), 200 * unit(rng)));
    const KdTree2 tree(a);
    for (const auto& q : b) {
      const auto hit = tree.nearest(q);
      const auto ref = brute_force_nearest(a, q);
      nn_exact = nn_exact && hit.index == ref.index;
      worst_nn = std::max(worst_nn, std::abs(hit.squared_distance - ref.squared_distance));
    }
    worst_nn = std::max(worst_nn, std::abs(one_sided_chamfer(b, a) - brute_mean(b, a) * kPixelPitchMm));
    const auto pr = precision_recall(b, a);
    const double t = 1.0 / kPixelPitchMm;
    worst_nn = std::max(worst_nn, std::abs(*pr.precision - static_cast<double>(brute_within(b, a, t)) / m));
    worst_nn = std::max(worst_nn, std::abs(pr.recall - static_cast<double>(brute_within(a, b, t)) / n));

    CameraView cam;
    cam.extrinsic = RigidPose(Mat3::Identity(), Vec3(0, 0, 600));
    std::vector<Vec3> model;
    for (int k = 0; k < m; ++k) model.push_back(uniform_vec3(rng, -40, 40));
    std::vector<Vec2> proj;
    for (const auto& x : model) proj.push_back(project(x, cam));
    worst_nn = std::max(worst_nn, std::abs(mrpd(a, model, RigidPose(), cam) -
                                           brute_mean(a, proj) * cam.object_mm_per_px()));
  }

  // Friedman: hand-computed average ranks on a fixed 3 x 5 matrix with ties.
  Eigen::MatrixXd s(3, 5);
  s << 1, 1, 2, 3, 5,
       2, 1, 1, 4, 5,
       3, 2, 3, 1, 5;
  const FriedmanResult fr = friedman_test(s);
  // rank sums 8.5, 9.5, 12; sum of squared deviations from 10 is 6.5;
  // chi2 = 12 * 6.5 / (n k (k + 1)) / tie correction = 1.3 / 0.75
  const bool friedman_ok = fr.rank_sums == std::vector<double>{8.5, 9.5, 12} &&
                           std::abs(fr.statistic - 1.3 / 0.75) < 1e-12;

  return {worst_jac < 1e-4 && nn_exact && worst_nn <= 1e-9 && friedman_ok,
          fmt::format("Jacobian max relative error {:.2e}; nearest-neighbour max deviation {:.1e}{}; Friedman "
                      "rank sums {}/{}/{}, statistic {:.6f}",
                      worst_jac, worst_nn, nn_exact ? "" : " (index mismatch)", fr.rank_sums[0], fr.rank_sums[1],
                      fr.rank_sums[2], fr.statistic)};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CONTREG_BIN) + " " + args + " >>" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "contreg_acceptance_determinism";
  fs::remove_all(root);
  const fs::path log = root / "log.txt";
  std::vector<std::string> mismatched;
  int compared = 0;

  // Every command runs twice in the same working directory, since reports
  // record their input paths. Each pass is snapshotted into a/ or b/.
  const fs::path d = root / "work";
  for (const char* side : {"a", "b"}) {
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string s = (d / "s").string();
    const std::vector<std::string> cmds = {
        "synth " + s + " --sigma 0.5 --spurious 0.05 --misclass 0.05 --seed 21 --beads-only --max-missing-beads 2",
        "calibrate " + s + "/scene.json " + s + "/fiducial.json -o " + (d / "cal.json").string(),
        "segment " + s + "/phantom.ply " + (d / "seg.ply").string(),
        "register " + (d / "cal.json").string() + " " + s + "/phantom.ply -o " + (d / "reg.json").string() +
            " --restart --seed 3",
        "evaluate " + (d / "cal.json").string() + " " + s + "/phantom.ply " + (d / "reg.json").string() + " -o " +
            (d / "ev.json").string() + " --csv " + (d / "ev.csv").string(),
        "sweep " + (d / "cal.json").string() + " " + s + "/phantom.ply -o " + (d / "sw").string() +
            " --runs 6 --seed 4 --restart --jobs " + (side[0] == 'a' ? "1" : "2"),
        "demo " + (d / "demo").string(),
    };
    for (const auto& c : cmds) {
      if (run_cli(c, log) != 0) return {false, "command failed: " + c};
    }
    fs::copy(d, root / side, fs::copy_options::recursive);
  }
  const std::vector<std::string> outputs = {
      "s/phantom.ply", "s/scene.json", "s/fiducial.json", "cal.json", "cal.json.calibration.json", "seg.ply",
      "reg.json", "ev.json", "ev.csv", "sw/sweep.csv", "sw/summary.json", "sw/plot/plot_psi_deg.tsv",
      "demo/phantom.ply", "demo/scene.json", "demo/scene_calibrated.json", "demo/report.json",
      "demo/metrics.json", "demo/metrics.csv"};
  for (const auto& f : outputs) {
    ++compared;
    const std::string a = slurp(root / "a" / f);
    if (a.empty() || a != slurp(root / "b" / f)) mismatched.push_back(f);
  }
  std::string detail = fmt::format("{} primary outputs over 7 commands compared", compared);
  for (const auto& f : mismatched) detail += ", differs: " + f;
  return {mismatched.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, closed_loop},         {2, fixed_init},       {3, robustness},  {4, substructure_advantage},
      {5, reweighting_ablation}, {6, single_vs_multi}, {7, calibration}, {8, numerics},
      {9, determinism}};
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("{} criterion {}: {}\n", o.pass ? "PASS" : "FAIL", id, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
