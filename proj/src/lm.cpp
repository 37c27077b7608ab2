#include "contreg/lm.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "contreg/error.hpp"

namespace contreg {

PoseJacobian forward_difference_jacobian(const PoseResidualFn& residual_fn, const RigidPose& pose,
                                         const Vec3& pivot_world, const Eigen::VectorXd& r0,
                                         const LmOptions& options) {
  PoseJacobian jac(r0.size(), 6);
  Eigen::VectorXd r1(r0.size());
  for (int k = 0; k < 6; ++k) {
    const double h = k < 3 ? options.rotation_step_rad : options.translation_step_mm;
    Vec6 delta = Vec6::Zero();
    delta[k] = h;
    if (!residual_fn(apply_increment(pose, delta, pivot_world), r1)) {
      // Backward difference when the forward probe is infeasible.
      delta[k] = -h;
      if (!residual_fn(apply_increment(pose, delta, pivot_world), r1)) {
        throw Error(ErrorCode::NonPositiveDepth, "Jacobian probe left the feasible region");
      }
      jac.col(k) = (r0 - r1) / h;
    } else {
      jac.col(k) = (r1 - r0) / h;
    }
  }
  return jac;
}

LmResult optimize_pose(const PoseResidualFn& residual_fn, const RigidPose& pose0,
                       const Vec3& pivot_model, const LmOptions& options) {
  LmResult result;
  result.pose = pose0;

  Eigen::VectorXd r;
  if (!residual_fn(pose0, r)) {
    throw Error(ErrorCode::NonPositiveDepth, "initial pose places points behind a camera");
  }
  ++result.residual_evaluations;
  double cost = r.squaredNorm();
  result.cost_history.push_back(cost);
  if (r.size() == 0 || cost == 0.0) return result;

  RigidPose pose = pose0;
  double lambda = -1.0;
  Eigen::VectorXd r_trial;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vec3 pivot = pose.apply(pivot_model);
    const PoseJacobian jac = forward_difference_jacobian(residual_fn, pose, pivot, r, options);
    result.residual_evaluations += 6;
    ++result.iterations;

    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Vec6 grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

    Vec6 scale = jtj.diagonal();
    const double max_diag = scale.maxCoeff();
    if (!(max_diag > 0.0)) break;
    for (int k = 0; k < 6; ++k) scale[k] = std::max(scale[k], 1e-12 * max_diag);
    if (lambda < 0.0) lambda = options.initial_lambda;

    bool accepted = false;
    bool solved_once = false;
    double new_cost = cost;
    Vec6 step = Vec6::Zero();
    while (lambda <= options.lambda_max) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal() += lambda * scale;
      Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(damped);
      step = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      solved_once = true;
      const RigidPose trial = apply_increment(pose, step, pivot);
      ++result.residual_evaluations;
      if (residual_fn(trial, r_trial)) {
        new_cost = r_trial.squaredNorm();
        if (new_cost < cost) {
          pose = trial;
          r.swap(r_trial);
          accepted = true;
          lambda = std::max(lambda / 10.0, 1e-12);
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!solved_once) {
      throw Error(ErrorCode::SingularNormalEquations,
                  "damped normal equations are singular at lambda_max");
    }
    if (!accepted) break;

    const double decrease = cost - new_cost;
    cost = new_cost;
    result.cost_history.push_back(cost);
    result.pose = pose;
    if (cost == 0.0) break;
    if (decrease <= options.relative_cost_tolerance * (cost + decrease)) break;
    if (step.norm() <= options.step_tolerance) break;
  }
  return result;
}

}  // namespace contreg
