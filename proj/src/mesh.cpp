#include "contreg/mesh.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>

#include "contreg/error.hpp"

namespace contreg {

bool LabeledMesh::fully_labeled() const {
  return vertex_class.size() == vertices.size() && !vertices.empty() &&
         std::all_of(vertex_class.begin(), vertex_class.end(),
                     [](ClassId c) { return c != kUnlabeled; });
}

Vec3 LabeledMesh::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& v : vertices) c += v;
  return vertices.empty() ? c : Vec3(c / static_cast<double>(vertices.size()));
}

PrincipalFrame principal_frame(const LabeledMesh& mesh) {
  if (mesh.vertices.size() < 4) {
    throw Error(ErrorCode::DegenerateGeometry, "principal axes need at least 4 vertices");
  }
  PrincipalFrame frame;
  frame.centroid = mesh.centroid();
  Mat3 cov = Mat3::Zero();
  for (const auto& v : mesh.vertices) {
    const Vec3 d = v - frame.centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(mesh.vertices.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Eigen sorts ascending.
  const Vec3 values = eig.eigenvalues().reverse();
  Mat3 axes = eig.eigenvectors().rowwise().reverse();
  const double top = values[0];
  if (!(top > 0.0) || values[2] <= 1e-12 * top) {
    throw Error(ErrorCode::DegenerateGeometry, "vertices are coplanar or coincident");
  }
  if (values[0] - values[1] <= 1e-9 * std::max(1.0, top)) {
    throw Error(ErrorCode::DegenerateGeometry, "first principal axis is not unique");
  }
  for (int k = 0; k < 2; ++k) {
    Eigen::Index dominant = 0;
    axes.col(k).cwiseAbs().maxCoeff(&dominant);
    if (axes(dominant, k) < 0.0) axes.col(k) = -axes.col(k);
  }
  axes.col(2) = axes.col(0).cross(axes.col(1)).normalized();
  frame.axes = axes;
  frame.variances = values;
  return frame;
}

LabeledMesh segment_principal_axis(const LabeledMesh& mesh,
                                   const std::optional<SplitPlane>& condyle_split,
                                   bool keep_existing_labels) {
  if (keep_existing_labels && mesh.fully_labeled()) return mesh;

  const PrincipalFrame frame = principal_frame(mesh);
  const Vec3 axis = frame.axes.col(0);
  double lo = 0.0, hi = 0.0;
  std::vector<double> along(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    along[i] = axis.dot(mesh.vertices[i] - frame.centroid);
    lo = std::min(lo, along[i]);
    hi = std::max(hi, along[i]);
  }
  // The shaft is the elongated half.
  const double shaft_sign = hi >= -lo ? 1.0 : -1.0;

  LabeledMesh out = mesh;
  out.vertex_class.assign(mesh.vertices.size(), kUnlabeled);
  Vec3 distal_centroid = Vec3::Zero();
  std::size_t distal_count = 0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (shaft_sign * along[i] >= 0.0) {
      out.vertex_class[i] = kDiaphysis;
    } else {
      distal_centroid += mesh.vertices[i];
      ++distal_count;
    }
  }
  if (distal_count == 0) return out;
  distal_centroid /= static_cast<double>(distal_count);

  const Vec3 normal = condyle_split ? condyle_split->normal : Vec3(frame.axes.col(1));
  const Vec3 origin = condyle_split ? condyle_split->point : distal_centroid;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (out.vertex_class[i] != kUnlabeled) continue;
    out.vertex_class[i] =
        normal.dot(mesh.vertices[i] - origin) > 0.0 ? kMedialCondyle : kLateralCondyle;
  }
  return out;
}

MeshTopology::MeshTopology(const LabeledMesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  struct HalfEdge {
    int lo, hi, from, face;
  };
  std::vector<HalfEdge> half;
  half.reserve(mesh.triangles.size() * 3);
  normals_.reserve(mesh.triangles.size());
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& tri = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= nv) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("triangle {} index out of range", f));
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw Error(ErrorCode::NonManifoldEdge, fmt::format("triangle {} repeats a vertex", f));
    }
    const Vec3& a = mesh.vertices[tri[0]];
    normals_.push_back((mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a));
    for (int k = 0; k < 3; ++k) {
      const int from = tri[k], to = tri[(k + 1) % 3];
      half.push_back({std::min(from, to), std::max(from, to), from, static_cast<int>(f)});
    }
  }
  std::sort(half.begin(), half.end(), [](const HalfEdge& a, const HalfEdge& b) {
    return std::tie(a.lo, a.hi, a.face) < std::tie(b.lo, b.hi, b.face);
  });

  const bool labeled = mesh.vertex_class.size() == mesh.vertices.size();
  for (std::size_t i = 0; i < half.size();) {
    std::size_t j = i;
    while (j < half.size() && half[j].lo == half[i].lo && half[j].hi == half[i].hi) ++j;
    if (j - i != 2) {
      throw Error(ErrorCode::NonManifoldEdge,
                  fmt::format("edge ({}, {}) borders {} triangles", half[i].lo, half[i].hi, j - i));
    }
    const HalfEdge& a = half[i];
    const HalfEdge& b = half[i + 1];
    if (a.from == b.from) {
      throw Error(ErrorCode::NonManifoldEdge,
                  fmt::format("edge ({}, {}) has inconsistent orientation", a.lo, a.hi));
    }
    MeshEdge e;
    e.v0 = a.lo;
    e.v1 = a.hi;
    e.face0 = a.from == a.lo ? a.face : b.face;
    e.face1 = a.from == a.lo ? b.face : a.face;
    if (labeled) {
      const ClassId c0 = mesh.vertex_class[e.v0], c1 = mesh.vertex_class[e.v1];
      e.class_id = c0 == c1 ? c0 : kUnlabeled;
    }
    edges_.push_back(e);
    i = j;
  }
}

void validate_mesh(const LabeledMesh& mesh) {
  if (mesh.vertex_class.size() != mesh.vertices.size()) {
    throw Error(ErrorCode::InvalidArgument, "vertex_class size differs from vertex count");
  }
  MeshTopology topology(mesh);
  (void)topology;
}

SilhouetteExtractor::SilhouetteExtractor(const LabeledMesh& mesh)
    : mesh_(mesh), topology_(mesh) {}

std::vector<int> SilhouetteExtractor::silhouette_edges(const Vec3& c) const {
  const auto& normals = topology_.face_normals();
  std::vector<signed char> front(normals.size());
  for (std::size_t f = 0; f < normals.size(); ++f) {
    const Vec3& p = mesh_.vertices[mesh_.triangles[f][0]];
    front[f] = normals[f].dot(c - p) > 0.0 ? 1 : 0;
  }
  std::vector<int> out;
  const auto& edges = topology_.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (front[edges[e].face0] != front[edges[e].face1]) out.push_back(static_cast<int>(e));
  }
  return out;
}

std::vector<SilhouetteSample> SilhouetteExtractor::extract(const RigidPose& pose,
                                                           const CameraView& view,
                                                           double sample_spacing,
                                                           SilhouetteMode mode) const {
  if (!(sample_spacing > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "sample spacing must be positive");
  }
  const Vec3 center_model = pose.inverse().apply(view.center_world());
  std::vector<SilhouetteSample> out;
  const auto& edges = topology_.edges();
  for (const int e : silhouette_edges(center_model)) {
    const MeshEdge& edge = edges[e];
    if (mode == SilhouetteMode::PerClass && !is_substructure(edge.class_id)) continue;
    const Vec3& a = mesh_.vertices[edge.v0];
    const Vec3& b = mesh_.vertices[edge.v1];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / sample_spacing)));
    for (int k = 0; k < n; ++k) {
      const double s = (k + 0.5) / n;
      out.push_back({a + s * (b - a), edge.class_id, e});
    }
  }
  return out;
}

std::vector<SilhouetteSample> extract_silhouette(const LabeledMesh& mesh, const RigidPose& pose,
                                                 const CameraView& view, double sample_spacing) {
  return SilhouetteExtractor(mesh).extract(pose, view, sample_spacing, SilhouetteMode::PerClass);
}

// ---------------------------------------------------------------------------
// PLY

namespace {

std::string next_content_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return line;
  }
  throw Error(ErrorCode::ParseError, "unexpected end of PLY file");
}

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

}  // namespace

LabeledMesh read_ply(std::istream& in) {
  std::string line;
  if (next_content_line(in) != "ply") throw Error(ErrorCode::ParseError, "missing 'ply' magic");

  std::vector<PlyElement> elements;
  bool saw_format = false;
  while (true) {
    line = next_content_line(in);
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string fmt_name;
      ls >> fmt_name;
      if (fmt_name != "ascii") {
        throw Error(ErrorCode::ParseError, "only ASCII PLY is supported, got " + fmt_name);
      }
      saw_format = true;
    } else if (keyword == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      if (!ls) throw Error(ErrorCode::ParseError, "malformed element line: " + line);
      elements.push_back(el);
    } else if (keyword == "property") {
      if (elements.empty()) throw Error(ErrorCode::ParseError, "property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type, name;
        ls >> count_type >> item_type >> name;
        elements.back().has_list = true;
        elements.back().properties.push_back(name);
      } else {
        std::string name;
        ls >> name;
        elements.back().properties.push_back(name);
      }
    } else {
      throw Error(ErrorCode::ParseError, "unknown PLY header keyword: " + keyword);
    }
  }
  if (!saw_format) throw Error(ErrorCode::ParseError, "missing format line");

  LabeledMesh mesh;
  for (const auto& el : elements) {
    if (el.name == "vertex") {
      const auto find = [&](const std::string& n) -> int {
        auto it = std::find(el.properties.begin(), el.properties.end(), n);
        return it == el.properties.end() ? -1 : static_cast<int>(it - el.properties.begin());
      };
      const int ix = find("x"), iy = find("y"), iz = find("z"), ic = find("class");
      if (ix < 0 || iy < 0 || iz < 0 || el.has_list) {
        throw Error(ErrorCode::ParseError, "vertex element needs scalar x, y, z properties");
      }
      std::vector<double> values(el.properties.size());
      for (std::size_t i = 0; i < el.count; ++i) {
        std::istringstream ls(next_content_line(in));
        for (auto& v : values) ls >> v;
        if (!ls) throw Error(ErrorCode::ParseError, fmt::format("malformed vertex {}", i));
        mesh.vertices.emplace_back(values[ix], values[iy], values[iz]);
        mesh.vertex_class.push_back(ic >= 0 ? static_cast<ClassId>(std::lround(values[ic]))
                                            : kUnlabeled);
      }
    } else if (el.name == "face") {
      for (std::size_t i = 0; i < el.count; ++i) {
        std::istringstream ls(next_content_line(in));
        int n = 0;
        ls >> n;
        if (n != 3) throw Error(ErrorCode::ParseError, fmt::format("face {} is not a triangle", i));
        std::array<int, 3> tri{};
        ls >> tri[0] >> tri[1] >> tri[2];
        if (!ls) throw Error(ErrorCode::ParseError, fmt::format("malformed face {}", i));
        mesh.triangles.push_back(tri);
      }
    } else {
      for (std::size_t i = 0; i < el.count; ++i) next_content_line(in);
    }
  }
  for (const auto& tri : mesh.triangles) {
    for (int v : tri) {
      if (v < 0 || v >= static_cast<int>(mesh.vertices.size())) {
        throw Error(ErrorCode::ParseError, "face index out of range");
      }
    }
  }
  return mesh;
}

LabeledMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  return read_ply(in);
}

void write_ply(std::ostream& out, const LabeledMesh& mesh) {
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\nproperty int class\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    const ClassId c = i < mesh.vertex_class.size() ? mesh.vertex_class[i] : kUnlabeled;
    out << fmt::format("{} {} {} {}\n", v.x(), v.y(), v.z(), c);
  }
  for (const auto& t : mesh.triangles) out << fmt::format("3 {} {} {}\n", t[0], t[1], t[2]);
}

void write_ply(const std::filesystem::path& path, const LabeledMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  write_ply(out, mesh);
}

}  // namespace contreg
