#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

#include "contreg/geometry.hpp"

namespace contreg {

/// Fills `residuals` for a candidate pose. Returns false when the pose is
/// infeasible (a point fell behind a camera); the step is then rejected.
using PoseResidualFn = std::function<bool(const RigidPose&, Eigen::VectorXd& residuals)>;

using PoseJacobian = Eigen::Matrix<double, Eigen::Dynamic, 6>;

struct LmOptions {
  int max_iterations = 50;
  /// Forward-difference steps for the numeric Jacobian.
  double rotation_step_rad = 1e-6;
  double translation_step_mm = 1e-4;
  double initial_lambda = 1e-3;
  double lambda_max = 1e16;
  /// Stop when an accepted step lowers the cost by less than this fraction.
  double relative_cost_tolerance = 1e-10;
  double gradient_tolerance = 1e-14;
  double step_tolerance = 1e-14;
};

struct LmResult {
  RigidPose pose;
  /// Cost (sum of squares) at the start and after every accepted step.
  std::vector<double> cost_history;
  int iterations = 0;
  int residual_evaluations = 0;

  double initial_cost() const { return cost_history.front(); }
  double final_cost() const { return cost_history.back(); }
};

/// Forward-difference Jacobian of `residual_fn` with respect to a local
/// increment (axis-angle, translation) about `pivot_world`.
PoseJacobian forward_difference_jacobian(const PoseResidualFn& residual_fn, const RigidPose& pose,
                                         const Vec3& pivot_world, const Eigen::VectorXd& r0,
                                         const LmOptions& options);

/// Levenberg-Marquardt over a 6-DOF rigid pose. Increments are composed onto
/// the current pose about the world position of `pivot_model`. Cost is
/// non-increasing; returns `pose0` unchanged when no step improves it.
/// Throws SingularNormalEquations if the damped normal equations cannot be
/// solved even at lambda_max, NonPositiveDepth if pose0 itself is infeasible.
LmResult optimize_pose(const PoseResidualFn& residual_fn, const RigidPose& pose0,
                       const Vec3& pivot_model, const LmOptions& options = {});

}  // namespace contreg
