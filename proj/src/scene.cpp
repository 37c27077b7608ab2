#include "contreg/scene.hpp"

#include <fstream>

#include "contreg/error.hpp"

namespace contreg {

using nlohmann::json;

std::size_t ContourObservation::total_points() const {
  std::size_t n = 0;
  for (const auto& [cls, pts] : points_by_class) n += pts.size();
  return n;
}

ContourObservation ContourObservation::merged() const {
  ContourObservation out;
  out.view_id = view_id;
  auto& all = out.points_by_class[kUnlabeled];
  for (const auto& [cls, pts] : points_by_class) all.insert(all.end(), pts.begin(), pts.end());
  return out;
}

const SceneView& Scene::view(const std::string& id) const {
  for (const auto& v : views) {
    if (v.camera.view_id == id) return v;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown view id '" + id + "'");
}

SceneView& Scene::view(const std::string& id) {
  return const_cast<SceneView&>(static_cast<const Scene&>(*this).view(id));
}

bool Scene::has_view(const std::string& id) const {
  for (const auto& v : views) {
    if (v.camera.view_id == id) return true;
  }
  return false;
}

std::vector<CameraView> Scene::cameras(const std::vector<std::string>& ids) const {
  std::vector<CameraView> out;
  for (const auto& id : ids) {
    const SceneView& v = view(id);
    if (!v.has_extrinsic) {
      throw Error(ErrorCode::InvalidArgument, "view '" + id + "' has no calibrated extrinsic");
    }
    out.push_back(v.camera);
  }
  return out;
}

std::vector<ContourObservation> Scene::observations_for(const std::vector<std::string>& ids) const {
  std::vector<ContourObservation> out;
  for (const auto& id : ids) {
    ContourObservation found;
    found.view_id = id;
    for (const auto& obs : observations) {
      if (obs.view_id == id) found = obs;
    }
    out.push_back(std::move(found));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json points_to_json(const std::vector<Vec2>& pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p.x(), p.y()});
  return arr;
}

std::vector<Vec2> points_from_json(const json& j) {
  std::vector<Vec2> pts;
  pts.reserve(j.size());
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::ParseError, "2D point must be [u, v]");
    pts.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return pts;
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

json pose_to_json(const RigidPose& pose) {
  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back({r(i, 0), r(i, 1), r(i, 2)});
  return {{"rotation", rows}, {"translation", {t.x(), t.y(), t.z()}}};
}

RigidPose pose_from_json(const json& j) {
  const json& rows = j.at("rotation");
  if (!rows.is_array() || rows.size() != 3) throw Error(ErrorCode::ParseError, "rotation must be 3x3");
  Mat3 r;
  for (int i = 0; i < 3; ++i) r.row(i) = vec3_from_json(rows[i]).transpose();
  try {
    return RigidPose(r, vec3_from_json(j.at("translation")));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

json scene_to_json(const Scene& scene) {
  json views = json::array();
  for (const auto& v : scene.views) {
    const auto& k = v.camera.intrinsics;
    json jv = {{"id", v.camera.view_id},
               {"intrinsics",
                {{"focal_px", k.focal_px},
                 {"principal_point", {k.principal_point.x(), k.principal_point.y()}},
                 {"pixel_pitch", k.pixel_pitch}}}};
    if (v.camera.object_distance_mm) jv["object_distance_mm"] = *v.camera.object_distance_mm;
    if (v.has_extrinsic) jv["extrinsic"] = pose_to_json(v.camera.extrinsic);
    if (!v.bead_detections_px.empty()) jv["bead_detections_px"] = points_to_json(v.bead_detections_px);
    if (!v.bead_truth.empty()) jv["bead_truth"] = v.bead_truth;
    views.push_back(std::move(jv));
  }
  json observations = json::array();
  for (const auto& obs : scene.observations) {
    json contours = json::object();
    for (const auto& [cls, pts] : obs.points_by_class) contours[std::to_string(cls)] = points_to_json(pts);
    observations.push_back({{"view_id", obs.view_id}, {"contours", contours}});
  }
  json outlines = json::array();
  for (const auto& [id, pts] : scene.truth_outlines) {
    outlines.push_back({{"view_id", id}, {"points", points_to_json(pts)}});
  }
  json out = {{"format", "contreg-scene/1"},
              {"image_size_px", {scene.image_width_px, scene.image_height_px}},
              {"views", views},
              {"observations", observations},
              {"truth_outlines", outlines},
              {"registration_views", scene.registration_views},
              {"control_views", scene.control_views}};
  if (scene.ground_truth_pose) out["ground_truth_pose"] = pose_to_json(*scene.ground_truth_pose);
  if (scene.ground_truth_fiducial) {
    out["ground_truth_fiducial"] = pose_to_json(*scene.ground_truth_fiducial);
  }
  return out;
}

Scene scene_from_json(const json& j) {
  Scene scene;
  try {
    if (j.contains("image_size_px")) {
      scene.image_width_px = j.at("image_size_px").at(0).get<int>();
      scene.image_height_px = j.at("image_size_px").at(1).get<int>();
    }
    for (const auto& jv : j.at("views")) {
      SceneView v;
      v.camera.view_id = jv.at("id").get<std::string>();
      const auto& jk = jv.at("intrinsics");
      v.camera.intrinsics.focal_px = jk.at("focal_px").get<double>();
      v.camera.intrinsics.principal_point =
          Vec2(jk.at("principal_point").at(0).get<double>(), jk.at("principal_point").at(1).get<double>());
      v.camera.intrinsics.pixel_pitch = jk.value("pixel_pitch", kPixelPitchMm);
      v.camera.intrinsics.validate();
      if (jv.contains("object_distance_mm")) {
        v.camera.object_distance_mm = jv.at("object_distance_mm").get<double>();
      }
      v.has_extrinsic = jv.contains("extrinsic");
      if (v.has_extrinsic) v.camera.extrinsic = pose_from_json(jv.at("extrinsic"));
      if (jv.contains("bead_detections_px")) {
        v.bead_detections_px = points_from_json(jv.at("bead_detections_px"));
      }
      if (jv.contains("bead_truth")) v.bead_truth = jv.at("bead_truth").get<std::vector<int>>();
      if (scene.has_view(v.camera.view_id)) {
        throw Error(ErrorCode::ParseError, "duplicate view id '" + v.camera.view_id + "'");
      }
      scene.views.push_back(std::move(v));
    }
    if (j.contains("observations")) {
      for (const auto& jo : j.at("observations")) {
        ContourObservation obs;
        obs.view_id = jo.at("view_id").get<std::string>();
        if (!scene.has_view(obs.view_id)) {
          throw Error(ErrorCode::ParseError, "observation references unknown view '" + obs.view_id + "'");
        }
        for (const auto& [key, pts] : jo.at("contours").items()) {
          const ClassId cls = std::stoi(key);
          if (cls < kUnlabeled || cls > kLateralCondyle) {
            throw Error(ErrorCode::ParseError, "contour class out of range: " + key);
          }
          obs.points_by_class[cls] = points_from_json(pts);
        }
        scene.observations.push_back(std::move(obs));
      }
    }
    if (j.contains("truth_outlines")) {
      for (const auto& jo : j.at("truth_outlines")) {
        scene.truth_outlines[jo.at("view_id").get<std::string>()] = points_from_json(jo.at("points"));
      }
    }
    if (j.contains("registration_views")) {
      scene.registration_views = j.at("registration_views").get<std::vector<std::string>>();
    }
    if (j.contains("control_views")) {
      scene.control_views = j.at("control_views").get<std::vector<std::string>>();
    }
    if (j.contains("ground_truth_pose")) scene.ground_truth_pose = pose_from_json(j.at("ground_truth_pose"));
    if (j.contains("ground_truth_fiducial")) {
      scene.ground_truth_fiducial = pose_from_json(j.at("ground_truth_fiducial"));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scene: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::ParseError, "scene: contour class key is not an integer");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, e.what());
  }
  return scene;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Scene read_scene(const std::filesystem::path& path) { return scene_from_json(read_json(path)); }

void write_scene(const std::filesystem::path& path, const Scene& scene) {
  write_json(path, scene_to_json(scene));
}

}  // namespace contreg
