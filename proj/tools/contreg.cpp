#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "contreg/calibration.hpp"
#include "contreg/error.hpp"
#include "contreg/evaluation.hpp"
#include "contreg/mesh.hpp"
#include "contreg/registration.hpp"
#include "contreg/scene.hpp"
#include "contreg/synth.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace contreg;
using nlohmann::json;

namespace {

/// The fixed initial perturbation used for every non-sweep registration:
/// +30, -40, +5 mm and -17.18, 0, 17.18 degrees.
constexpr const char* kDefaultInit = "30,-40,5,-17.18,0,17.18";

Vec6 parse_init(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorCode::ParseError, "--init expects 'tx,ty,tz,phi,theta,psi', got '" + s + "'");
    }
    vals.push_back(v);
  }
  if (vals.size() != 6) throw Error(ErrorCode::ParseError, "--init expects 6 comma-separated numbers");
  Vec6 out;
  for (int i = 0; i < 6; ++i) out[i] = vals[i];
  return out;
}

Vec3 parse_vec3(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw Error(ErrorCode::ParseError, fmt::format("{} expects 3 numbers", what));
  return {v[0], v[1], v[2]};
}

std::string init_validator(const std::string& s) {
  try {
    parse_init(s);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

/// Starting pose: a perturbation of the scene's ground truth when present,
/// otherwise an absolute placement of the mesh's principal frame in world.
RigidPose initial_pose(const Scene& scene, const LabeledMesh& mesh, const Vec6& init) {
  const PrincipalFrame frame = principal_frame(mesh);
  if (scene.ground_truth_pose) return apply_perturbation(*scene.ground_truth_pose, frame, init);
  return euler_to_pose(init[3], init[4], init[5], init.head<3>()) * frame.to_model().inverse();
}

// ---------------------------------------------------------------------------

struct SegmentArgs {
  std::string input, output;
  std::vector<double> split_normal, split_point;
  bool keep_labels = false;
};

int cmd_segment(const SegmentArgs& a, cli::RunManifest& manifest) {
  manifest.add_input(a.input);
  const LabeledMesh mesh = read_ply(fs::path(a.input));
  std::optional<SplitPlane> split;
  if (!a.split_normal.empty() || !a.split_point.empty()) {
    split = SplitPlane{parse_vec3(a.split_normal, "--split-normal"), parse_vec3(a.split_point, "--split-point")};
  }
  write_ply(fs::path(a.output), segment_principal_axis(mesh, split, a.keep_labels));
  manifest.add_output(a.output);
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  std::string scene, fiducial, output;
  double inlier_thresh_px = 0.8;
  std::uint64_t seed = 0x5eed;
};

int cmd_calibrate(const CalibrateArgs& a, cli::RunManifest& manifest) {
  manifest.add_input(a.scene);
  manifest.add_input(a.fiducial);
  manifest.set_seed(a.seed);
  Scene scene = read_scene(a.scene);
  const FiducialModel fid = read_fiducial_json(a.fiducial);
  BlindPnpOptions opts;
  opts.inlier_thresh_px = a.inlier_thresh_px;
  opts.seed = a.seed;

  json summary = json::array();
  for (auto& v : scene.views) {
    if (v.bead_detections_px.empty()) continue;
    CalibrationResult res;
    try {
      res = blind_pnp(BeadDetections{v.bead_detections_px}, fid, v.camera.intrinsics, opts);
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("view {}: {}", v.camera.view_id, e.what()));
    }
    v.camera.extrinsic = res.pose;
    v.has_extrinsic = true;
    v.camera.object_distance_mm = res.pose.translation().norm();
    json matching = json::array();
    for (const auto& m : res.matching) matching.push_back({m.detection, m.bead_id});
    summary.push_back({{"view_id", v.camera.view_id},
                       {"inlier_count", res.inlier_count},
                       {"mean_reproj_err_px", res.mean_reproj_err_px},
                       {"hypotheses_evaluated", res.hypotheses_evaluated},
                       {"matching", matching}});
    fmt::print(std::cerr, "{}: {} inliers, mean reprojection {:.3f} px\n", v.camera.view_id, res.inlier_count,
               res.mean_reproj_err_px);
  }
  write_scene(a.output, scene);
  const fs::path cal_path = a.output + ".calibration.json";
  write_json(cal_path, {{"inlier_thresh_px", a.inlier_thresh_px}, {"views", summary}});
  manifest.add_output(a.output);
  manifest.add_output(cal_path);
  return 0;
}

// ---------------------------------------------------------------------------

struct RegistrationArgs {
  std::string mode = "substructure";
  bool restart = false;
  std::string restart_trigger = "final";
  bool no_reweight = false;
  int max_updates = 30;
  int reweight_rounds = 10;
  int lm_max_iters = 50;
  int max_restarts = 5;
  double sample_spacing_mm = kDefaultSampleSpacingMm;
  std::uint64_t seed = 1;

  RegistrationConfig config() const {
    RegistrationConfig c;
    c.mode = parse_match_mode(mode);
    c.reweight = !no_reweight;
    if (restart_trigger == "final") {
      c.restart_trigger = RestartTrigger::FinalMedian;
    } else if (restart_trigger == "early") {
      c.restart_trigger = RestartTrigger::AfterUpdates;
    } else {
      throw Error(ErrorCode::InvalidArgument, "--restart-trigger must be 'final' or 'early'");
    }
    c.max_correspondence_updates = max_updates;
    c.max_reweight_rounds = reweight_rounds;
    c.lm_max_iters = lm_max_iters;
    c.max_restarts = max_restarts;
    c.sample_spacing_mm = sample_spacing_mm;
    c.rng_seed = seed;
    c.validate();
    return c;
  }
};

void add_registration_options(CLI::App* sub, RegistrationArgs& r) {
  sub->add_option("--mode", r.mode, "substructure or silhouette")
      ->check(CLI::IsMember({"substructure", "silhouette"}))
      ->capture_default_str();
  sub->add_flag("--restart", r.restart, "Enable the restart controller");
  sub->add_option("--restart-trigger", r.restart_trigger, "final: final median; early: also after 4 updates")
      ->check(CLI::IsMember({"final", "early"}))
      ->capture_default_str();
  sub->add_flag("--no-reweight", r.no_reweight, "Skip correspondence reweighting");
  sub->add_option("--reweight-rounds", r.reweight_rounds, "Maximum reweighting rounds (1 = single pass)")->capture_default_str();
  sub->add_option("--max-updates", r.max_updates, "Correspondence updates per ICP loop")->capture_default_str();
  sub->add_option("--lm-max-iters", r.lm_max_iters, "LM iterations per update")->capture_default_str();
  sub->add_option("--max-restarts", r.max_restarts)->capture_default_str();
  sub->add_option("--sample-spacing", r.sample_spacing_mm, "Silhouette sample spacing (mm)")->capture_default_str();
  sub->add_option("--seed", r.seed, "Restart RNG seed")->capture_default_str();
}

struct RegisterArgs {
  std::string scene, mesh, output;
  std::vector<std::string> views;
  std::string init = kDefaultInit;
  RegistrationArgs reg;
};

int cmd_register(const RegisterArgs& a, cli::RunManifest& manifest) {
  manifest.add_input(a.scene);
  manifest.add_input(a.mesh);
  manifest.set_seed(a.reg.seed);
  const Scene scene = read_scene(a.scene);
  const LabeledMesh mesh = read_ply(fs::path(a.mesh));
  const RegistrationConfig cfg = a.reg.config();
  const auto ids = a.views.empty() ? scene.registration_views : a.views;
  if (ids.empty()) throw Error(ErrorCode::InvalidArgument, "no registration views given");
  if (ids.size() == 1) {
    fmt::print(std::cerr, "warning: single-view mode; depth and mirror ambiguities are unresolved\n");
  }
  const auto views = collect_views(scene, ids);
  const Vec6 init = parse_init(a.init);
  const RigidPose pose0 = initial_pose(scene, mesh, init);
  const RegistrationReport rep =
      a.reg.restart ? register_with_restart(mesh, views, pose0, cfg) : register_contours(mesh, views, pose0, cfg);
  json j = report_to_json(rep, cfg);
  j["registration_views"] = ids;
  j["init"] = {init[0], init[1], init[2], init[3], init[4], init[5]};
  j["initial_pose"] = pose_to_json(pose0);
  write_json(a.output, j);
  manifest.add_output(a.output);
  fmt::print(std::cerr, "converged: {}, restarts: {}, final median residual {:.3f} mm\n", rep.converged,
             rep.restart_count, rep.final_median_residual_mm);
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string scene, mesh;
  std::vector<std::string> reports;
  std::vector<std::string> control_views;
  std::string output, csv;
  double sample_spacing_mm = kDefaultSampleSpacingMm;
};

int cmd_evaluate(const EvaluateArgs& a, cli::RunManifest& manifest) {
  manifest.add_input(a.scene);
  manifest.add_input(a.mesh);
  const Scene scene = read_scene(a.scene);
  const LabeledMesh mesh = read_ply(fs::path(a.mesh));
  const SilhouetteExtractor extractor(mesh);
  const auto controls = a.control_views.empty() ? scene.control_views : a.control_views;
  for (const auto& id : controls) {
    if (!scene.has_view(id)) throw Error(ErrorCode::InvalidArgument, "unknown control view '" + id + "'");
  }

  json results = json::array();
  std::ostringstream csv;
  csv << "report,mrpd_mm,chamfer_mm,precision_at_1mm,recall_at_1mm,success\n";
  for (const auto& path : a.reports) {
    manifest.add_input(path);
    const json rep = read_json(path);
    Scene eval_scene = scene;
    if (rep.contains("registration_views")) {
      eval_scene.registration_views = rep.at("registration_views").get<std::vector<std::string>>();
    }
    MetricReport m = evaluate_pose(extractor, eval_scene, report_final_pose(rep), controls, a.sample_spacing_mm);
    if (rep.contains("mode")) m.mode = parse_match_mode(rep.at("mode").get<std::string>());
    if (rep.contains("config")) m.seed = rep.at("config").value("rng_seed", std::uint64_t{0});
    if (rep.contains("init")) {
      const auto v = rep.at("init").get<std::vector<double>>();
      for (std::size_t i = 0; i < 6 && i < v.size(); ++i) m.init[i] = v[i];
    }
    json jm = metrics_to_json(m);
    jm["report"] = path;
    results.push_back(jm);
    fmt::print(csv, "{},{},{},{},{},{}\n", path, m.mrpd_mm, m.chamfer_mm, m.precision, m.recall, m.success ? 1 : 0);
  }
  write_json(a.output, {{"control_views", controls}, {"results", results}});
  manifest.add_output(a.output);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + a.csv);
    out << csv.str();
    out.close();
    manifest.add_output(a.csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string scene, mesh, outdir;
  int runs = 50;
  int jobs = 1;
  double translation_range_mm = 50.0;
  double rotation_range_deg = 180.0;
  std::vector<std::string> views, control_views;
  RegistrationArgs reg;
};

int cmd_sweep(const SweepArgs& a, cli::RunManifest& manifest) {
  manifest.add_input(a.scene);
  manifest.add_input(a.mesh);
  manifest.set_seed(a.reg.seed);
  const Scene scene = read_scene(a.scene);
  const LabeledMesh mesh = read_ply(fs::path(a.mesh));
  SweepOptions so;
  so.n_runs = a.runs;
  so.jobs = a.jobs;
  so.restart = a.reg.restart;
  so.seed = a.reg.seed;
  so.translation_range_mm = a.translation_range_mm;
  so.rotation_range_deg = a.rotation_range_deg;
  so.registration_views = a.views;
  so.control_views = a.control_views;
  const SweepResult res = robustness_sweep(mesh, scene, a.reg.config(), so);

  const fs::path dir(a.outdir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "sweep.csv");
    if (!csv) throw Error(ErrorCode::InvalidArgument, "cannot write in " + a.outdir);
    write_sweep_csv(csv, res);
  }
  write_json(dir / "summary.json", sweep_summary_json(res));
  write_plot_data(dir / "plot", res);
  manifest.add_output(dir / "sweep.csv");
  manifest.add_output(dir / "summary.json");
  for (const char* name : {"tx_mm", "ty_mm", "tz_mm", "phi_deg", "theta_deg", "psi_deg"}) {
    manifest.add_output(dir / "plot" / fmt::format("plot_{}.tsv", name));
  }
  const auto rate = res.success_rate();
  fmt::print(std::cerr, "{} / {} successful runs{}\n", res.successes(), res.runs.size(),
             rate ? fmt::format(" ({:.1f}%)", 100.0 * *rate) : std::string());
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string outdir;
  std::string phantom = "standard";
  std::uint64_t phantom_seed = 1;
  NoiseSpec noise;
  int resolution = 1;
  bool fiducial = true;
  bool beads_only = false;
  int max_missing = 0;
  int max_spurious = 0;
};

LabeledMesh make_phantom(const SynthArgs& a) {
  PhantomSpec spec = a.phantom == "mirror"   ? PhantomSpec::mirror_symmetric()
                     : a.phantom == "varied" ? PhantomSpec::varied(a.phantom_seed)
                                             : PhantomSpec::standard();
  spec.resolution = a.resolution;
  return build_phantom(spec);
}

int cmd_synth(const SynthArgs& a, cli::RunManifest& manifest) {
  manifest.set_seed(a.noise.seed);
  const LabeledMesh mesh = make_phantom(a);
  const RigidPose truth = default_true_pose(mesh);
  SceneOptions opts;
  opts.include_extrinsics = !a.beads_only;
  opts.beads = {a.max_missing, a.max_spurious};
  std::optional<FiducialModel> fid;
  if (a.fiducial || a.beads_only) fid = default_fiducial();
  const Scene scene = generate_scene(mesh, CameraRingSpec{}, truth, a.noise, fid, opts);

  const fs::path dir(a.outdir);
  fs::create_directories(dir);
  write_ply(dir / "phantom.ply", mesh);
  write_scene(dir / "scene.json", scene);
  manifest.add_output(dir / "phantom.ply");
  manifest.add_output(dir / "scene.json");
  if (fid) {
    write_fiducial_json(dir / "fiducial.json", *fid);
    manifest.add_output(dir / "fiducial.json");
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_demo(const std::string& outdir, cli::RunManifest& manifest) {
  const fs::path dir(outdir);
  SynthArgs s;
  s.outdir = outdir;
  s.noise = NoiseSpec{0.5, 0.02, 0.02, 0.0, 7};
  s.beads_only = true;
  s.max_missing = 2;
  s.max_spurious = 2;
  cli::RunManifest sub("synth", {});
  cmd_synth(s, sub);

  CalibrateArgs c{(dir / "scene.json").string(), (dir / "fiducial.json").string(),
                  (dir / "scene_calibrated.json").string()};
  cmd_calibrate(c, sub);

  RegisterArgs r;
  r.scene = c.output;
  r.mesh = (dir / "phantom.ply").string();
  r.output = (dir / "report.json").string();
  r.reg.restart = true;
  cmd_register(r, sub);

  EvaluateArgs e;
  e.scene = c.output;
  e.mesh = r.mesh;
  e.reports = {r.output};
  e.output = (dir / "metrics.json").string();
  e.csv = (dir / "metrics.csv").string();
  cmd_evaluate(e, sub);

  const json metrics = read_json(e.output).at("results").at(0);
  fmt::print("demo: mRPD {:.3f} mm over control views, success {}\n", metrics.at("mrpd_mm").get<double>(),
             metrics.at("success").get<bool>());
  for (const char* f : {"phantom.ply", "scene.json", "fiducial.json", "scene_calibrated.json", "report.json",
                        "metrics.json", "metrics.csv"}) {
    manifest.add_output(dir / f);
  }
  return metrics.at("success").get<bool>() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view 2D/3D contour registration with bone substructures"};
  app.set_config("--config", "", "TOML config file; flags override it");
  app.require_subcommand(1);
  app.set_version_flag("--version", CONTREG_VERSION);

  SegmentArgs seg;
  auto* s_seg = app.add_subcommand("segment", "Label a mesh into diaphysis and condyles");
  s_seg->add_option("input", seg.input, "Input PLY")->required()->check(CLI::ExistingFile);
  s_seg->add_option("output", seg.output, "Output labeled PLY")->required();
  s_seg->add_option("--split-normal", seg.split_normal, "Condyle split plane normal x,y,z")->delimiter(',')->expected(3);
  s_seg->add_option("--split-point", seg.split_point, "Condyle split plane point x,y,z")->delimiter(',')->expected(3);
  s_seg->add_flag("--keep-labels", seg.keep_labels, "Keep the labels of a fully labeled input");

  CalibrateArgs cal;
  auto* s_cal = app.add_subcommand("calibrate", "Solve view poses from bead detections (blind PnP)");
  s_cal->add_option("scene", cal.scene)->required()->check(CLI::ExistingFile);
  s_cal->add_option("fiducial", cal.fiducial)->required()->check(CLI::ExistingFile);
  s_cal->add_option("-o,--output", cal.output, "Calibrated scene JSON")->required();
  s_cal->add_option("--inlier-thresh", cal.inlier_thresh_px, "Inlier threshold (px)")->capture_default_str();
  s_cal->add_option("--seed", cal.seed, "Hypothesis sampling seed")->capture_default_str();

  RegisterArgs reg;
  auto* s_reg = app.add_subcommand("register", "Register the mesh to contour observations");
  s_reg->add_option("scene", reg.scene)->required()->check(CLI::ExistingFile);
  s_reg->add_option("mesh", reg.mesh)->required()->check(CLI::ExistingFile);
  s_reg->add_option("-o,--output", reg.output, "Report JSON")->required();
  s_reg->add_option("--views", reg.views, "Registration view ids (comma separated)")->delimiter(',');
  s_reg->add_option("--init", reg.init, "tx,ty,tz,phi,theta,psi (mm, deg)")
      ->check(CLI::Validator(init_validator, "INIT"))
      ->capture_default_str();
  add_registration_options(s_reg, reg.reg);

  EvaluateArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "mRPD, Chamfer and precision/recall in control views");
  s_ev->add_option("scene", ev.scene)->required()->check(CLI::ExistingFile);
  s_ev->add_option("mesh", ev.mesh)->required()->check(CLI::ExistingFile);
  s_ev->add_option("reports", ev.reports, "Report JSON files")->required()->check(CLI::ExistingFile);
  s_ev->add_option("--control-views", ev.control_views, "Control view ids (comma separated)")->delimiter(',');
  s_ev->add_option("-o,--output", ev.output, "Metrics JSON")->required();
  s_ev->add_option("--csv", ev.csv, "Metrics CSV, one row per report");
  s_ev->add_option("--sample-spacing", ev.sample_spacing_mm)->capture_default_str();

  SweepArgs sw;
  auto* s_sw = app.add_subcommand("sweep", "Random-initialization robustness sweep");
  s_sw->add_option("scene", sw.scene)->required()->check(CLI::ExistingFile);
  s_sw->add_option("mesh", sw.mesh)->required()->check(CLI::ExistingFile);
  s_sw->add_option("-o,--outdir", sw.outdir, "Output directory")->required();
  s_sw->add_option("--runs", sw.runs)->capture_default_str()->check(CLI::NonNegativeNumber);
  s_sw->add_option("--jobs", sw.jobs, "Parallel runs")->envname("CONTREG_JOBS")->capture_default_str()->check(
      CLI::PositiveNumber);
  s_sw->add_option("--translation-range", sw.translation_range_mm, "+/- mm")->capture_default_str();
  s_sw->add_option("--rotation-range", sw.rotation_range_deg, "+/- deg")->capture_default_str();
  s_sw->add_option("--views", sw.views)->delimiter(',');
  s_sw->add_option("--control-views", sw.control_views)->delimiter(',');
  add_registration_options(s_sw, sw.reg);

  SynthArgs sy;
  auto* s_sy = app.add_subcommand("synth", "Generate a phantom and a synthetic scene");
  s_sy->add_option("outdir", sy.outdir)->required();
  s_sy->add_option("--phantom", sy.phantom)->check(CLI::IsMember({"standard", "mirror", "varied"}))->capture_default_str();
  s_sy->add_option("--phantom-seed", sy.phantom_seed)->capture_default_str();
  s_sy->add_option("--resolution", sy.resolution, "Mesh resolution multiplier")->capture_default_str();
  s_sy->add_option("--sigma", sy.noise.gaussian_sigma_px, "Gaussian noise per axis (px)")->capture_default_str();
  s_sy->add_option("--spurious", sy.noise.spurious_fraction)->capture_default_str();
  s_sy->add_option("--misclass", sy.noise.misclass_fraction)->capture_default_str();
  s_sy->add_option("--dropout", sy.noise.dropout_fraction)->capture_default_str();
  s_sy->add_option("--seed", sy.noise.seed)->capture_default_str();
  s_sy->add_flag("!--no-fiducial", sy.fiducial, "Omit beads");
  s_sy->add_flag("--beads-only", sy.beads_only, "Omit extrinsics; views must be calibrated");
  s_sy->add_option("--max-missing-beads", sy.max_missing)->capture_default_str();
  s_sy->add_option("--max-spurious-beads", sy.max_spurious)->capture_default_str();

  std::string demo_dir;
  auto* s_demo = app.add_subcommand("demo", "Synthesize, calibrate, register and evaluate end to end");
  s_demo->add_option("outdir", demo_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  cli::RunManifest manifest(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  manifest.set_config(sub->config_to_str(true, false));
  fs::path manifest_path;
  try {
    int rc = 0;
    if (sub == s_seg) {
      rc = cmd_segment(seg, manifest);
      manifest_path = seg.output + ".manifest.json";
    } else if (sub == s_cal) {
      rc = cmd_calibrate(cal, manifest);
      manifest_path = cal.output + ".manifest.json";
    } else if (sub == s_reg) {
      rc = cmd_register(reg, manifest);
      manifest_path = reg.output + ".manifest.json";
    } else if (sub == s_ev) {
      rc = cmd_evaluate(ev, manifest);
      manifest_path = ev.output + ".manifest.json";
    } else if (sub == s_sw) {
      rc = cmd_sweep(sw, manifest);
      manifest_path = fs::path(sw.outdir) / "manifest.json";
    } else if (sub == s_sy) {
      rc = cmd_synth(sy, manifest);
      manifest_path = fs::path(sy.outdir) / "manifest.json";
    } else {
      rc = cmd_demo(demo_dir, manifest);
      manifest_path = fs::path(demo_dir) / "manifest.json";
    }
    manifest.write(manifest_path);
    return rc;
  } catch (const Error& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    if (exit_code_for(e.code()) == 1) fmt::print(std::cerr, "{}", sub->help());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return 2;
  }
}
