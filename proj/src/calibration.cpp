#include "contreg/calibration.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "contreg/error.hpp"
#include "contreg/lm.hpp"

namespace contreg {

// ---------------------------------------------------------------------------
// Fiducial model

void FiducialModel::validate() const {
  if (bead_positions.size() < 4) {
    throw Error(ErrorCode::InvalidArgument, "fiducial needs at least 4 beads");
  }
  if (bead_ids.size() != bead_positions.size()) {
    throw Error(ErrorCode::InvalidArgument, "bead id count differs from bead count");
  }
  if (std::set<int>(bead_ids.begin(), bead_ids.end()).size() != bead_ids.size()) {
    throw Error(ErrorCode::InvalidArgument, "duplicate bead ids");
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : bead_positions) mean += p;
  mean /= static_cast<double>(bead_positions.size());
  Eigen::MatrixX3d centered(bead_positions.size(), 3);
  for (std::size_t i = 0; i < bead_positions.size(); ++i) {
    centered.row(i) = (bead_positions[i] - mean).transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixX3d> svd(centered);
  if (svd.singularValues()[2] <= 1e-6) {
    throw Error(ErrorCode::DegenerateGeometry, "fiducial beads are coplanar");
  }
}

FiducialModel read_fiducial_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  FiducialModel model;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& bead : doc.at("beads")) {
      const auto xyz = bead.at("xyz_mm").get<std::vector<double>>();
      if (xyz.size() != 3) throw Error(ErrorCode::ParseError, "xyz_mm must have 3 entries");
      model.bead_ids.push_back(bead.at("id").get<int>());
      model.bead_positions.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  model.validate();
  return model;
}

void write_fiducial_json(const std::filesystem::path& path, const FiducialModel& model) {
  nlohmann::json beads = nlohmann::json::array();
  for (std::size_t i = 0; i < model.bead_positions.size(); ++i) {
    const auto& p = model.bead_positions[i];
    beads.push_back({{"id", model.bead_ids[i]}, {"xyz_mm", {p.x(), p.y(), p.z()}}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << nlohmann::json{{"beads", beads}}.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Polynomial root finding

namespace {

using Poly = std::array<double, 5>;  // coefficient k multiplies v^k

Poly poly_mul(const Poly& a, int da, const Poly& b, int db) {
  Poly out{};
  for (int i = 0; i <= da; ++i)
    for (int j = 0; j <= db; ++j) out[i + j] += a[i] * b[j];
  return out;
}

double poly_eval(const double* c, int deg, double x) {
  double y = c[deg];
  for (int k = deg - 1; k >= 0; --k) y = y * x + c[k];
  return y;
}

/// Largest real root of t^3 + a t^2 + b t + c.
double largest_cubic_root(double a, double b, double c) {
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  double t;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    t = std::cbrt(-0.5 * q + sq) + std::cbrt(-0.5 * q - sq);
  } else {
    // three real roots (p <= 0); k = 0 branch is the largest
    const double r = std::sqrt(std::max(-p / 3.0, 0.0));
    const double arg = r > 0.0 ? std::clamp(-0.5 * q / (r * r * r), -1.0, 1.0) : 0.0;
    t = 2.0 * r * std::cos(std::acos(arg) / 3.0);
  }
  double x = t - a / 3.0;
  for (int it = 0; it < 2; ++it) {
    const double f = ((x + a) * x + b) * x + c;
    const double df = (3.0 * x + 2.0 * a) * x + b;
    if (df == 0.0) break;
    x -= f / df;
  }
  return x;
}

/// Real roots of a quartic (Ferrari), polished by Newton on the original
/// polynomial and returned in ascending order.
int quartic_roots(const double* coeffs, double* roots) {
  const double e4 = coeffs[4];
  double scale = 0.0;
  for (int k = 0; k <= 4; ++k) scale = std::max(scale, std::abs(coeffs[k]));
  if (scale == 0.0 || std::abs(e4) <= 1e-14 * scale) return 0;
  const double b = coeffs[3] / e4, c = coeffs[2] / e4, d = coeffs[1] / e4, e = coeffs[0] / e4;

  // depressed quartic y^4 + p y^2 + q y + r with x = y - b/4
  const double b2 = b * b;
  const double p = c - 3.0 * b2 / 8.0;
  const double q = d - 0.5 * b * c + b2 * b / 8.0;
  const double r = e - 0.25 * b * d + b2 * c / 16.0 - 3.0 * b2 * b2 / 256.0;
  const double mag = std::max({1.0, std::abs(p), std::sqrt(std::abs(r))});

  int n = 0;
  double ys[4];
  // A double root perturbed by rounding in the coefficients can split into a
  // complex pair; pairs this close to the real axis are kept as one root.
  const double near_axis = 1e-5 * (1.0 + 0.25 * std::abs(b) + std::sqrt(mag));
  const auto add_quadratic = [&](double qb, double qc) {
    double disc = qb * qb - 4.0 * qc;
    if (disc < 0.0) {
      if (disc < -4.0 * near_axis * near_axis) return;
      disc = 0.0;
    }
    const double sq = std::sqrt(disc);
    ys[n++] = 0.5 * (-qb - sq);
    ys[n++] = 0.5 * (-qb + sq);
  };
  if (std::abs(q) <= 1e-14 * mag * mag * mag) {
    // biquadratic
    double disc = p * p - 4.0 * r;
    if (disc < 0.0) {
      if (disc < -1e-10 * std::max(p * p, std::abs(r))) return 0;
      disc = 0.0;
    }
    for (const double z : {0.5 * (-p - std::sqrt(disc)), 0.5 * (-p + std::sqrt(disc))}) {
      if (z < 0.0) continue;
      ys[n++] = -std::sqrt(z);
      ys[n++] = std::sqrt(z);
    }
  } else {
    const double m = largest_cubic_root(p, 0.25 * p * p - r, -0.125 * q * q);
    if (!(m > 0.0)) return 0;
    const double s = std::sqrt(2.0 * m);
    const double h = q / (2.0 * s);
    add_quadratic(-s, 0.5 * p + m + h);
    add_quadratic(s, 0.5 * p + m - h);
  }

  for (int i = 0; i < n; ++i) {
    double x = ys[i] - 0.25 * b;
    for (int it = 0; it < 2; ++it) {
      const double f = (((x + b) * x + c) * x + d) * x + e;
      const double df = ((4.0 * x + 3.0 * b) * x + 2.0 * c) * x + d;
      if (df == 0.0) break;
      const double step = f / df;
      if (!std::isfinite(step)) break;
      x -= step;
    }
    roots[i] = x;
  }
  std::sort(roots, roots + n);
  return n;
}

Mat3 triangle_frame(const Vec3& a, const Vec3& b, const Vec3& c) {
  Mat3 m;
  const Vec3 e1 = (b - a).normalized();
  const Vec3 e3 = e1.cross(c - a).normalized();
  m.col(0) = e1;
  m.col(1) = e3.cross(e1);
  m.col(2) = e3;
  return m;
}

Vec3 bearing(const Vec2& px, const CameraIntrinsics& k) {
  return Vec3((px.x() - k.principal_point.x()) / k.focal_px,
              (px.y() - k.principal_point.y()) / k.focal_px, 1.0)
      .normalized();
}

bool collinear(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a;
  return ab.cross(ac).norm() <= 1e-9 * ab.norm() * ac.norm();
}

struct P3pSolution {
  Mat3 rotation;
  Vec3 translation;
};

/// Grunert's distance formulation: with s2 = u s1 and s3 = v s1, the law of
/// cosines on the three bead distances reduces to a quartic in v. Depths are
/// polished by Newton on the three distance equations before the pose is
/// recovered from the two congruent triangles.
int p3p_bearings(const std::array<Vec3, 3>& f, const std::array<Vec3, 3>& x,
                 std::array<P3pSolution, 4>& out) {
  const double a2 = (x[1] - x[2]).squaredNorm();
  const double b2 = (x[0] - x[2]).squaredNorm();
  const double c2 = (x[0] - x[1]).squaredNorm();
  const double ca = f[1].dot(f[2]);
  const double cb = f[0].dot(f[2]);
  const double cg = f[0].dot(f[1]);
  const double k = (a2 - c2) / b2;

  const Poly d{cg, -ca, 0, 0, 0};
  const Poly nn{1.0 + k, -2.0 * k * cb, k - 1.0, 0, 0};
  const Poly q{1.0, -2.0 * cb, 1.0, 0, 0};
  const Poly d2 = poly_mul(d, 1, d, 1);
  const Poly n2 = poly_mul(nn, 2, nn, 2);
  const Poly nd = poly_mul(nn, 2, d, 1);
  const Poly qd2 = poly_mul(q, 2, d2, 2);
  double quartic[5];
  for (int i = 0; i < 5; ++i) {
    quartic[i] = 4.0 * d2[i] + n2[i] - 4.0 * cg * nd[i] - 4.0 * (c2 / b2) * qd2[i];
  }
  double roots[4];
  const int nroots = quartic_roots(quartic, roots);

  const Mat3 frame_x = triangle_frame(x[0], x[1], x[2]);
  int count = 0;
  for (int r = 0; r < nroots; ++r) {
    const double v = roots[r];
    if (!(v > 0.0)) continue;
    const double qv = poly_eval(q.data(), 2, v);
    if (!(qv > 0.0)) continue;
    const double s0 = std::sqrt(b2 / qv);
    const double dv = cg - ca * v;
    // u = N(v) / 2 d(v) degenerates to 0/0 when d(v) ~ 0 (symmetric
    // triangles), where the limit can be the wrong branch. Near there the
    // roots of the s1-s2 distance equation are tried as well and every
    // candidate must satisfy all three distance equations.
    double us[3];
    int nu = 0;
    us[nu++] = poly_eval(nn.data(), 2, v) / (2.0 * dv);
    const bool near_degenerate = std::abs(dv) < 1e-4;
    if (near_degenerate) {
      const double disc = cg * cg - 1.0 + c2 / (s0 * s0);
      if (disc >= 0.0) {
        us[nu++] = cg - std::sqrt(disc);
        us[nu++] = cg + std::sqrt(disc);
      }
    }
    for (int iu = 0; iu < nu && count < 4; ++iu) {
      const double u = us[iu];
      if (!(u > 0.0) || !std::isfinite(u)) continue;
      Vec3 s;
      s[0] = s0;
      s[1] = u * s[0];
      s[2] = v * s[0];
      if (near_degenerate) {
        const double scale = a2 + b2 + c2;
        const double ea = s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * ca - a2;
        const double ec = s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cg - c2;
        if (std::abs(ea) > 1e-4 * scale || std::abs(ec) > 1e-4 * scale) continue;
      }

      for (int it = 0; it < 2; ++it) {
        const Vec3 residual(s[1] * s[1] + s[2] * s[2] - 2.0 * s[1] * s[2] * ca - a2,
                            s[0] * s[0] + s[2] * s[2] - 2.0 * s[0] * s[2] * cb - b2,
                            s[0] * s[0] + s[1] * s[1] - 2.0 * s[0] * s[1] * cg - c2);
        if (residual.cwiseAbs().maxCoeff() <= 1e-15 * (a2 + b2 + c2)) break;
        Mat3 jac;
        jac << 0.0, 2.0 * (s[1] - s[2] * ca), 2.0 * (s[2] - s[1] * ca),
            2.0 * (s[0] - s[2] * cb), 0.0, 2.0 * (s[2] - s[0] * cb),
            2.0 * (s[0] - s[1] * cg), 2.0 * (s[1] - s[0] * cg), 0.0;
        const Vec3 step = jac.inverse() * residual;
        if (!step.allFinite()) break;
        s -= step;
      }
      if (!(s.minCoeff() > 0.0) || !s.allFinite()) continue;

      const Vec3 p0 = s[0] * f[0], p1 = s[1] * f[1], p2 = s[2] * f[2];
      if (collinear(p0, p1, p2)) continue;
      P3pSolution sol;
      sol.rotation = triangle_frame(p0, p1, p2) * frame_x.transpose();
      sol.translation = p0 - sol.rotation * x[0];

      bool duplicate = false;
      for (int j = 0; j < count; ++j) {
        if ((out[j].rotation - sol.rotation).cwiseAbs().maxCoeff() < 1e-9 &&
            (out[j].translation - sol.translation).cwiseAbs().maxCoeff() < 1e-6) {
          duplicate = true;
        }
      }
      if (!duplicate) out[count++] = sol;
    }
  }
  return count;
}

double reprojection_error(const Mat3& r, const Vec3& t, const Vec3& x, const Vec2& px,
                          const CameraIntrinsics& k) {
  const auto uv = try_project(r * x + t, k);
  return uv ? (*uv - px).norm() : std::numeric_limits<double>::infinity();
}

}  // namespace

// ---------------------------------------------------------------------------
// Minimal solver and refinement

std::vector<RigidPose> solve_p3p(const std::array<Correspondence2D3D, 3>& corr,
                                 const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  const std::array<Vec3, 3> x{corr[0].point, corr[1].point, corr[2].point};
  if (collinear(x[0], x[1], x[2])) {
    throw Error(ErrorCode::CollinearPoints, "P3P needs three non-collinear points");
  }
  const std::array<Vec3, 3> f{bearing(corr[0].pixel, intrinsics),
                              bearing(corr[1].pixel, intrinsics),
                              bearing(corr[2].pixel, intrinsics)};
  // Three distinct non-collinear points cannot share one viewing ray.
  if (f[0].cross(f[1]).norm() < 1e-12 && f[0].cross(f[2]).norm() < 1e-12) {
    throw Error(ErrorCode::NoRealSolution, "all three points lie on one viewing ray");
  }
  std::array<P3pSolution, 4> sols;
  const int n = p3p_bearings(f, x, sols);
  std::vector<RigidPose> out;
  for (int i = 0; i < n; ++i) {
    double worst = 0.0;
    for (const auto& c : corr) {
      worst = std::max(worst, reprojection_error(sols[i].rotation, sols[i].translation, c.point,
                                                 c.pixel, intrinsics));
    }
    if (worst < 1e-6) out.push_back(RigidPose::from_approximate(sols[i].rotation, sols[i].translation));
  }
  if (out.empty()) throw Error(ErrorCode::NoRealSolution, "P3P has no real solution");
  return out;
}

RigidPose refine_pose_lm(const RigidPose& pose0, const std::vector<Correspondence2D3D>& corr,
                         const CameraIntrinsics& intrinsics) {
  if (corr.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "pose refinement needs at least 3 correspondences");
  }
  Vec3 pivot = Vec3::Zero();
  for (const auto& c : corr) pivot += c.point;
  pivot /= static_cast<double>(corr.size());

  const PoseResidualFn residuals = [&](const RigidPose& pose, Eigen::VectorXd& r) {
    r.resize(2 * static_cast<Eigen::Index>(corr.size()));
    for (std::size_t i = 0; i < corr.size(); ++i) {
      const auto uv = try_project(pose.apply(corr[i].point), intrinsics);
      if (!uv) return false;
      r.segment<2>(2 * i) = *uv - corr[i].pixel;
    }
    return true;
  };
  LmOptions options;
  options.max_iterations = 100;
  options.relative_cost_tolerance = 1e-14;
  return optimize_pose(residuals, pose0, pivot, options).pose;
}

// ---------------------------------------------------------------------------
// Blind PnP

namespace {

struct Hypothesis {
  int count = -1;
  double mean_err = std::numeric_limits<double>::infinity();
  std::vector<BeadMatch> matching;  // canonical detection indices
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

bool better_than(int count, double mean_err, const std::vector<BeadMatch>& matching,
                 const Hypothesis& best) {
  if (count != best.count) return count > best.count;
  if (mean_err != best.mean_err) return mean_err < best.mean_err;
  return matching < best.matching;
}

/// Mutual-nearest matching between projected beads and detections.
class HypothesisScorer {
 public:
  HypothesisScorer(const std::vector<Vec2>& dets, const FiducialModel& model,
                   const CameraIntrinsics& k, double thresh)
      : dets_(dets), model_(model), k_(k), thresh2_(thresh * thresh) {
    proj_.resize(model.bead_positions.size());
    valid_.resize(model.bead_positions.size());
    nearest_det_.resize(model.bead_positions.size());
    nearest_d2_.resize(model.bead_positions.size());
    for (const auto& d : dets) {
      det_x_.push_back(d.x());
      det_y_.push_back(d.y());
    }
  }

  /// Scores a pose; returns false early when it cannot reach `min_count`.
  bool score(const Mat3& r, const Vec3& t, int min_count, int& count, double& mean_err,
             std::vector<BeadMatch>* matching) {
    const int m = static_cast<int>(model_.bead_positions.size());
    const int n = static_cast<int>(dets_.size());
    int candidates = 0;
    for (int j = 0; j < m; ++j) {
      const Vec3 pc = r * model_.bead_positions[j] + t;
      valid_[j] = pc.z() > kMinDepthMm;
      nearest_det_[j] = -1;
      if (valid_[j]) {
        proj_[j] = Vec2(k_.focal_px * pc.x() / pc.z() + k_.principal_point.x(),
                        k_.focal_px * pc.y() / pc.z() + k_.principal_point.y());
        const double px = proj_[j].x(), py = proj_[j].y();
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
          const double dx = det_x_[i] - px, dy = det_y_[i] - py;
          const double d2 = dx * dx + dy * dy;
          if (d2 < best) {
            best = d2;
            nearest_det_[j] = i;
          }
        }
        nearest_d2_[j] = best;
        if (best <= thresh2_) ++candidates;
      }
      if (candidates + (m - j - 1) < min_count) return false;
    }
    count = 0;
    double err = 0.0;
    if (matching) matching->clear();
    for (int j = 0; j < m; ++j) {
      if (!valid_[j] || nearest_d2_[j] > thresh2_) continue;
      const int i = nearest_det_[j];
      bool mutual = true;
      for (int jj = 0; jj < m && mutual; ++jj) {
        if (jj == j || !valid_[jj]) continue;
        const double d2 = (dets_[i] - proj_[jj]).squaredNorm();
        if (d2 < nearest_d2_[j] || (d2 == nearest_d2_[j] && jj < j)) mutual = false;
      }
      if (!mutual) continue;
      ++count;
      err += std::sqrt(nearest_d2_[j]);
      if (matching) matching->push_back({i, model_.bead_ids[j]});
    }
    if (count < min_count) return false;
    mean_err = count > 0 ? err / count : 0.0;
    if (matching) std::sort(matching->begin(), matching->end());
    return true;
  }

 private:
  const std::vector<Vec2>& dets_;
  const FiducialModel& model_;
  const CameraIntrinsics& k_;
  double thresh2_;
  std::vector<double> det_x_, det_y_;
  std::vector<Vec2> proj_;
  std::vector<char> valid_;
  std::vector<int> nearest_det_;
  std::vector<double> nearest_d2_;
};

}  // namespace

std::vector<BeadMatch> match_beads(const RigidPose& pose, const BeadDetections& detections,
                                   const FiducialModel& model, const CameraIntrinsics& intrinsics,
                                   double thresh_px) {
  HypothesisScorer scorer(detections.centers_px, model, intrinsics, thresh_px);
  int count = 0;
  double mean = 0.0;
  std::vector<BeadMatch> matching;
  scorer.score(pose.rotation(), pose.translation(), 0, count, mean, &matching);
  return matching;
}

CalibrationResult blind_pnp(const BeadDetections& detections, const FiducialModel& model,
                            const CameraIntrinsics& intrinsics, const BlindPnpOptions& options) {
  intrinsics.validate();
  model.validate();
  const int n = static_cast<int>(detections.centers_px.size());
  if (n < 4) {
    throw Error(ErrorCode::InsufficientDetections,
                fmt::format("{} detections, at least 4 required", n));
  }
  const int m = static_cast<int>(model.bead_positions.size());

  // Canonical (lexicographic) detection order makes the search independent
  // of the input order.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Vec2& pa = detections.centers_px[a];
    const Vec2& pb = detections.centers_px[b];
    return pa.x() < pb.x() || (pa.x() == pb.x() && (pa.y() < pb.y() || (pa.y() == pb.y() && a < b)));
  });
  std::vector<Vec2> dets(n);
  std::vector<Vec3> bearings(n);
  for (int i = 0; i < n; ++i) {
    dets[i] = detections.centers_px[order[i]];
    bearings[i] = bearing(dets[i], intrinsics);
  }

  HypothesisScorer scorer(dets, model, intrinsics, options.inlier_thresh_px);
  Hypothesis best;
  std::vector<BeadMatch> matching;
  std::int64_t evaluated = 0;

  std::map<int, int> index_of_id;
  for (int j = 0; j < m; ++j) index_of_id[model.bead_ids[j]] = j;
  const auto refine_on = [&](const RigidPose& pose0, const std::vector<BeadMatch>& matches) {
    std::vector<Correspondence2D3D> corr;
    for (const auto& mt : matches) {
      corr.push_back({dets[mt.detection], model.bead_positions[index_of_id.at(mt.bead_id)]});
    }
    return refine_pose_lm(pose0, corr, intrinsics);
  };

  // Raw minimal-sample poses are noisy, so hypotheses close to the best raw
  // count are refined on their inliers and compete on the refined score.
  constexpr int kRefineSlack = 3;
  const auto try_hypothesis = [&](int d0, int d1, int d2, int b0, int b1, int b2) {
    const std::array<Vec3, 3> x{model.bead_positions[b0], model.bead_positions[b1],
                                model.bead_positions[b2]};
    if (collinear(x[0], x[1], x[2])) return;
    const std::array<Vec3, 3> f{bearings[d0], bearings[d1], bearings[d2]};
    std::array<P3pSolution, 4> sols;
    const int ns = p3p_bearings(f, x, sols);
    ++evaluated;
    for (int s = 0; s < ns; ++s) {
      int count = 0;
      double mean = 0.0;
      if (!scorer.score(sols[s].rotation, sols[s].translation, std::max(best.count - kRefineSlack, 4), count,
                        mean, &matching)) {
        continue;
      }
      RigidPose pose;
      try {
        pose = refine_on(RigidPose::from_approximate(sols[s].rotation, sols[s].translation), matching);
      } catch (const Error&) {
        continue;
      }
      scorer.score(pose.rotation(), pose.translation(), 0, count, mean, &matching);
      if (better_than(count, mean, matching, best)) {
        best.count = count;
        best.mean_err = mean;
        best.matching = matching;
        best.rotation = pose.rotation();
        best.translation = pose.translation();
      }
    }
  };

  if (n <= options.exhaustive_max_detections) {
    // Unordered detection triples x ordered bead triples enumerate every
    // distinct minimal correspondence set exactly once.
    for (int d0 = 0; d0 < n; ++d0)
      for (int d1 = d0 + 1; d1 < n; ++d1)
        for (int d2 = d1 + 1; d2 < n; ++d2)
          for (int b0 = 0; b0 < m; ++b0)
            for (int b1 = 0; b1 < m; ++b1) {
              if (b1 == b0) continue;
              for (int b2 = 0; b2 < m; ++b2) {
                if (b2 == b0 || b2 == b1) continue;
                try_hypothesis(d0, d1, d2, b0, b1, b2);
              }
            }
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<int> pick_det(0, n - 1);
    std::uniform_int_distribution<int> pick_bead(0, m - 1);
    for (std::int64_t h = 0; h < options.sampled_hypotheses; ++h) {
      std::array<int, 3> d;
      do {
        d = {pick_det(rng), pick_det(rng), pick_det(rng)};
      } while (d[0] == d[1] || d[1] == d[2] || d[0] == d[2]);
      std::sort(d.begin(), d.end());
      int b0, b1, b2;
      do {
        b0 = pick_bead(rng);
        b1 = pick_bead(rng);
        b2 = pick_bead(rng);
      } while (b0 == b1 || b1 == b2 || b0 == b2);
      try_hypothesis(d[0], d[1], d[2], b0, b1, b2);
    }
  }

  if (best.count < 4) {
    throw Error(ErrorCode::NoValidPose,
                fmt::format("best hypothesis has {} inliers, at least 4 required",
                            std::max(best.count, 0)));
  }

  // Refine on the inliers and re-match until the assignment is stable.

  BeadDetections canonical{dets};
  RigidPose pose = RigidPose::from_approximate(best.rotation, best.translation);
  std::vector<BeadMatch> current = best.matching;
  for (int round = 0; round < 10; ++round) {
    if (current.size() < 4) break;
    pose = refine_on(pose, current);
    std::vector<BeadMatch> next =
        match_beads(pose, canonical, model, intrinsics, options.inlier_thresh_px);
    const bool stable = next == current;
    current = std::move(next);
    if (stable) break;
  }
  if (current.size() < 4) {
    throw Error(ErrorCode::NoValidPose, "refined pose keeps fewer than 4 inliers");
  }

  CalibrationResult result;
  result.pose = pose;
  result.inlier_count = static_cast<int>(current.size());
  result.hypotheses_evaluated = evaluated;
  double err = 0.0;
  for (const auto& mt : current) {
    err += (project_camera_point(pose.apply(model.bead_positions[index_of_id.at(mt.bead_id)]),
                                 intrinsics) -
            dets[mt.detection])
               .norm();
    result.matching.push_back({order[mt.detection], mt.bead_id});
  }
  result.mean_reproj_err_px = err / static_cast<double>(current.size());
  std::sort(result.matching.begin(), result.matching.end());
  return result;
}

}  // namespace contreg
