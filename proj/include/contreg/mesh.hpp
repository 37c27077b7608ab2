#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "contreg/geometry.hpp"

namespace contreg {

/// Substructure class ids. 0 marks unlabeled vertices and, in whole-bone
/// silhouettes, edges that straddle two classes.
using ClassId = int;
inline constexpr ClassId kUnlabeled = 0;
inline constexpr ClassId kDiaphysis = 1;
inline constexpr ClassId kMedialCondyle = 2;
inline constexpr ClassId kLateralCondyle = 3;

inline bool is_substructure(ClassId c) { return c >= kDiaphysis && c <= kLateralCondyle; }

struct LabeledMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<ClassId> vertex_class;

  bool fully_labeled() const;
  Vec3 centroid() const;
};

/// Principal axes of the vertex cloud. Columns of `axes` are sorted by
/// decreasing variance, each oriented toward the positive side of the model
/// axis it is most aligned with, and made right-handed (e3 = e1 x e2).
struct PrincipalFrame {
  Vec3 centroid = Vec3::Zero();
  Mat3 axes = Mat3::Identity();
  Vec3 variances = Vec3::Zero();

  /// Frame -> model transform (x_model = axes * x_frame + centroid).
  RigidPose to_model() const { return RigidPose(axes, centroid); }
};

/// Throws DegenerateGeometry for fewer than 4 vertices, coplanar vertices, or
/// when the two largest variances agree within 1e-9 (no unique long axis).
PrincipalFrame principal_frame(const LabeledMesh& mesh);

struct SplitPlane {
  Vec3 normal;
  Vec3 point;
};

/// Labels vertices by a cut orthogonal to the first principal axis through
/// the vertex centroid. The side with the longer extent along the axis is the
/// diaphysis (1). The distal vertices are split into medial (2) / lateral (3)
/// by `condyle_split` (positive side = 2) or, by default, by the sign of the
/// second-principal-axis coordinate relative to the distal centroid.
/// With `keep_existing_labels`, a fully labeled mesh is returned unchanged.
LabeledMesh segment_principal_axis(const LabeledMesh& mesh,
                                   const std::optional<SplitPlane>& condyle_split = std::nullopt,
                                   bool keep_existing_labels = false);

struct MeshEdge {
  int v0 = 0;
  int v1 = 0;
  int face0 = 0;  ///< face traversing v0 -> v1
  int face1 = 0;  ///< face traversing v1 -> v0
  ClassId class_id = kUnlabeled;  ///< shared endpoint class, 0 when mixed
};

/// Edge adjacency of a closed, consistently oriented triangle mesh.
class MeshTopology {
 public:
  /// Throws InvalidArgument for out-of-range indices, NonManifoldEdge for
  /// boundary or over-shared edges and inconsistent orientation.
  explicit MeshTopology(const LabeledMesh& mesh);

  const std::vector<MeshEdge>& edges() const { return edges_; }
  const std::vector<Vec3>& face_normals() const { return normals_; }

 private:
  std::vector<MeshEdge> edges_;
  std::vector<Vec3> normals_;
};

/// Throws like MeshTopology; also checks the label vector length.
void validate_mesh(const LabeledMesh& mesh);

struct SilhouetteSample {
  Vec3 position;  ///< model frame, mm
  ClassId class_id = kUnlabeled;
  int source_edge = -1;
};

enum class SilhouetteMode {
  PerClass,   ///< only edges whose endpoints share a class in {1,2,3}
  WholeBone,  ///< every silhouette edge; mixed or unlabeled edges get class 0
};

inline constexpr double kDefaultSampleSpacingMm = 1.0;

/// Reusable silhouette extraction for one mesh (topology computed once).
class SilhouetteExtractor {
 public:
  explicit SilhouetteExtractor(const LabeledMesh& mesh);

  /// Samples every edge whose adjacent faces face opposite ways with respect
  /// to the camera centre (posed frame) at <= `sample_spacing` mm, taking
  /// sub-segment midpoints. No hidden-surface removal.
  std::vector<SilhouetteSample> extract(const RigidPose& pose, const CameraView& view,
                                        double sample_spacing = kDefaultSampleSpacingMm,
                                        SilhouetteMode mode = SilhouetteMode::PerClass) const;

  /// Indices of silhouette edges for the given camera centre in model frame.
  std::vector<int> silhouette_edges(const Vec3& camera_center_model) const;

  const LabeledMesh& mesh() const { return mesh_; }
  const MeshTopology& topology() const { return topology_; }

 private:
  LabeledMesh mesh_;
  MeshTopology topology_;
};

std::vector<SilhouetteSample> extract_silhouette(const LabeledMesh& mesh, const RigidPose& pose,
                                                 const CameraView& view,
                                                 double sample_spacing = kDefaultSampleSpacingMm);

/// ASCII PLY with an integer per-vertex `class` property (absent -> 0).
/// Binary PLY is refused with ParseError.
LabeledMesh read_ply(std::istream& in);
LabeledMesh read_ply(const std::filesystem::path& path);
void write_ply(std::ostream& out, const LabeledMesh& mesh);
void write_ply(const std::filesystem::path& path, const LabeledMesh& mesh);

}  // namespace contreg
