#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "contreg/mesh.hpp"
#include "contreg/scene.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = CONTREG_BIN;

/// Exit status of the CLI with `args`; output goes to `dir/log.txt`.
int run(const fs::path& dir, const std::string& args) {
  const std::string cmd = kBin + " " + args + " >>" + (dir / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_of(const fs::path& p) {
  const std::string cmd = "sha256sum '" + p.string() + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[65] = {};
  const std::size_t n = std::fread(buf, 1, 64, pipe);
  pclose(pipe);
  return std::string(buf, n);
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

/// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("contreg_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Synthesized scene shared by several cases.
const fs::path& synth_dir() {
  static const fs::path dir = [] {
    const fs::path d = scratch("synth");
    REQUIRE(run(d, "synth " + (d / "s").string() + " --sigma 0.5 --spurious 0.02 --misclass 0.02 --seed 3") == 0);
    return d / "s";
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and version exit 0, no subcommand exits 1") {
    const fs::path d = scratch("help");
    CHECK(run(d, "--help") == 0);
    CHECK(run(d, "register --help") == 0);
    CHECK(run(d, "--version") == 0);
    CHECK(run(d, "") == 1);
    CHECK(run(d, "frobnicate") == 1);
  }

  TEST_CASE("synth writes its files and a manifest with matching hashes") {
    const fs::path& s = synth_dir();
    for (const char* f : {"phantom.ply", "scene.json", "fiducial.json", "manifest.json"}) CHECK(fs::exists(s / f));
    const auto manifest = contreg::read_json(s / "manifest.json");
    CHECK(manifest.at("command") == "synth");
    CHECK(manifest.contains("seed"));
    CHECK(manifest.contains("tool_version"));
    REQUIRE(manifest.at("outputs").size() >= 3);
    for (const auto& o : manifest.at("outputs")) {
      CHECK(o.at("sha256").get<std::string>() == sha256_of(o.at("path").get<std::string>()));
    }
  }

  TEST_CASE("malformed init and unknown control view are usage errors") {
    const fs::path d = scratch("usage");
    const fs::path& s = synth_dir();
    const std::string scene = (s / "scene.json").string(), mesh = (s / "phantom.ply").string();
    CHECK(run(d, "register " + scene + " " + mesh + " -o " + (d / "r.json").string() + " --init 1,2,3") == 1);
    CHECK(run(d, "register " + scene + " " + mesh + " -o " + (d / "r.json").string() + " --init 1,2,3,4,5,x") == 1);
    CHECK(run(d, "register " + scene + " " + mesh + " -o " + (d / "r.json").string() + " --mode edges") == 1);
    REQUIRE(run(d, "register " + scene + " " + mesh + " -o " + (d / "r.json").string()) == 0);
    CHECK(run(d, "evaluate " + scene + " " + mesh + " " + (d / "r.json").string() + " -o " + (d / "m.json").string() +
                     " --control-views v42") == 1);
    CHECK(run(d, "evaluate " + scene + " " + mesh + " " + (d / "r.json").string() + " -o " + (d / "m.json").string() +
                     " --control-views v0") == 1);
  }

  TEST_CASE("a three-vertex mesh is a data error") {
    const fs::path d = scratch("tiny");
    std::ofstream(d / "tri.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                                    "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
                                    "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    CHECK(run(d, "segment " + (d / "tri.ply").string() + " " + (d / "out.ply").string()) == 2);
    // an unreadable file is a parse error, not a geometry error
    std::ofstream(d / "bad.ply") << "not a ply\n";
    CHECK(run(d, "segment " + (d / "bad.ply").string() + " " + (d / "out.ply").string()) == 1);
  }

  TEST_CASE("calibration with fewer than four detections is an algorithmic failure") {
    const fs::path d = scratch("calib");
    const fs::path& s = synth_dir();
    auto j = contreg::read_json(s / "scene.json");
    auto& dets = j.at("views").at(0).at("bead_detections_px");
    REQUIRE(dets.size() >= 4);
    dets.erase(dets.begin() + 3, dets.end());
    j.at("views").at(0).erase("bead_truth");
    contreg::write_json(d / "scene.json", j);
    CHECK(run(d, "calibrate " + (d / "scene.json").string() + " " + (s / "fiducial.json").string() + " -o " +
                     (d / "cal.json").string()) == 3);
  }

  TEST_CASE("noiseless calibration reproduces the extrinsics") {
    const fs::path d = scratch("calib_clean");
    REQUIRE(run(d, "synth " + (d / "s").string() + " --sigma 0 --spurious 0 --misclass 0") == 0);
    REQUIRE(run(d, "calibrate " + (d / "s" / "scene.json").string() + " " + (d / "s" / "fiducial.json").string() +
                       " -o " + (d / "cal.json").string()) == 0);
    const contreg::Scene truth = contreg::read_scene(d / "s" / "scene.json");
    const contreg::Scene cal = contreg::read_scene(d / "cal.json");
    REQUIRE(cal.views.size() == truth.views.size());
    for (std::size_t i = 0; i < cal.views.size(); ++i) {
      CHECK(cal.views[i].camera.extrinsic.max_abs_diff(truth.views[i].camera.extrinsic) < 1e-6);
    }
  }

  TEST_CASE("single view warns, evaluate writes one CSV row per report") {
    const fs::path d = scratch("batch");
    const fs::path& s = synth_dir();
    const std::string scene = (s / "scene.json").string(), mesh = (s / "phantom.ply").string();
    REQUIRE(run(d, "register " + scene + " " + mesh + " -o " + (d / "one.json").string() + " --views v0") == 0);
    CHECK(slurp(d / "log.txt").find("single-view") != std::string::npos);
    REQUIRE(run(d, "register " + scene + " " + mesh + " -o " + (d / "two.json").string()) == 0);
    REQUIRE(run(d, "evaluate " + scene + " " + mesh + " " + (d / "one.json").string() + " " +
                       (d / "two.json").string() + " " + (d / "two.json").string() + " -o " + (d / "m.json").string() +
                       " --csv " + (d / "m.csv").string()) == 0);
    CHECK(count_lines(slurp(d / "m.csv")) == 4);
    const auto m = contreg::read_json(d / "m.json");
    CHECK(m.at("results").size() == 3);
    CHECK(m.at("results").at(1).at("success").get<bool>());
  }

  TEST_CASE("keep-labels leaves a labeled mesh unchanged") {
    const fs::path d = scratch("keep");
    const fs::path& s = synth_dir();
    REQUIRE(run(d, "segment " + (s / "phantom.ply").string() + " " + (d / "kept.ply").string() + " --keep-labels") == 0);
    CHECK(slurp(d / "kept.ply") == slurp(s / "phantom.ply"));
    REQUIRE(run(d, "segment " + (s / "phantom.ply").string() + " " + (d / "relabeled.ply").string()) == 0);
    const contreg::LabeledMesh m = contreg::read_ply(d / "relabeled.ply");
    CHECK(m.fully_labeled());
    CHECK(fs::exists(d / "relabeled.ply.manifest.json"));
  }

  TEST_CASE("sweep CSV rows and empty sweeps") {
    const fs::path d = scratch("sweep");
    const fs::path& s = synth_dir();
    const std::string base = "sweep " + (s / "scene.json").string() + " " + (s / "phantom.ply").string();
    REQUIRE(run(d, base + " -o " + (d / "a").string() + " --runs 3 --seed 5") == 0);
    CHECK(count_lines(slurp(d / "a" / "sweep.csv")) == 4);
    CHECK(fs::exists(d / "a" / "summary.json"));
    CHECK(fs::exists(d / "a" / "plot" / "plot_psi_deg.tsv"));
    REQUIRE(run(d, base + " -o " + (d / "z").string() + " --runs 0") == 0);
    CHECK(count_lines(slurp(d / "z" / "sweep.csv")) == 1);
    CHECK(contreg::read_json(d / "z" / "summary.json").at("success_rate").is_null());
  }

  TEST_CASE("same seed, same bytes") {
    const fs::path d = scratch("determinism");
    const fs::path& s = synth_dir();
    REQUIRE(run(d, "synth " + (d / "s2").string() + " --sigma 0.5 --spurious 0.02 --misclass 0.02 --seed 3") == 0);
    for (const char* f : {"phantom.ply", "scene.json", "fiducial.json"}) CHECK(slurp(d / "s2" / f) == slurp(s / f));

    const std::string scene = (s / "scene.json").string(), mesh = (s / "phantom.ply").string();
    for (const char* name : {"r1.json", "r2.json"}) {
      REQUIRE(run(d, "register " + scene + " " + mesh + " -o " + (d / name).string() + " --restart --seed 4") == 0);
    }
    CHECK(slurp(d / "r1.json") == slurp(d / "r2.json"));

    const std::string sweep = "sweep " + scene + " " + mesh + " --runs 4 --seed 6 -o ";
    REQUIRE(run(d, sweep + (d / "w1").string() + " --jobs 1") == 0);
    REQUIRE(run(d, sweep + (d / "w2").string() + " --jobs 2") == 0);
    CHECK(slurp(d / "w1" / "sweep.csv") == slurp(d / "w2" / "sweep.csv"));
    CHECK(slurp(d / "w1" / "summary.json") == slurp(d / "w2" / "summary.json"));
  }

  TEST_CASE("demo runs end to end") {
    const fs::path d = scratch("demo");
    CHECK(run(d, "demo " + (d / "out").string()) == 0);
    const auto metrics = contreg::read_json(d / "out" / "metrics.json");
    CHECK(metrics.at("results").at(0).at("success").get<bool>());
    CHECK(count_lines(slurp(d / "out" / "metrics.csv")) == 2);
  }
}
