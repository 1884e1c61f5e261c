#pragma once

// Small dense nonlinear solvers shared by the hand, retargeting and arm code.
//
// Both entry points run a Levenberg-Marquardt iteration with multiplicative
// damping (x10 on a rejected step, /10 on an accepted one). Box bounds are
// handled by projecting every trial point back into the box and freezing the
// coordinates whose gradient pushes them out of it.
//
// The solvers return the basin of the initial guess. Linkage systems have
// mirror solutions, so callers that care about the branch must warm-start
// from the previous cycle's solution.

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace dexkin::kincore {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using ResidualFn = std::function<void(const VectorXd& x, VectorXd& r)>;
using JacobianFn = std::function<void(const VectorXd& x, MatrixXd& jac)>;

struct ResidualProblem {
  int dimension_x = 0;
  int dimension_r = 0;
  ResidualFn residual;
  // Finite differences are used when absent.
  JacobianFn jacobian;
  std::optional<VectorXd> lower_bounds;
  std::optional<VectorXd> upper_bounds;

  // Throws Error(kInvalidArgument) on inconsistent dimensions or bounds.
  void validate(bool square) const;
};

struct SolverSettings {
  int max_iterations = 100;
  double residual_tolerance = 1e-10;
  double step_tolerance = 1e-12;
  double gradient_tolerance = 1e-8;  // least squares only; below ~sqrt(eps) is unresolvable
  double initial_damping = 1e-3;
  double finite_difference_step = 1e-7;

  void validate() const;
};

enum class SolveStatus { kConverged, kMaxIterations, kSingularJacobian, kDivergedNaN };

const char* to_string(SolveStatus status);

struct SolveResult {
  VectorXd x_solution;
  double final_residual_norm = 0.0;  // infinity norm
  int iterations = 0;
  SolveStatus status = SolveStatus::kMaxIterations;
  // Set when x0 was outside the bounds and had to be projected.
  bool initial_point_projected = false;

  bool converged() const { return status == SolveStatus::kConverged; }
};

// Square system r(x) = 0. Converged means ||r(x)||_inf <= residual_tolerance.
SolveResult solve_root(const ResidualProblem& problem, const VectorXd& x0,
                       const SolverSettings& settings = {});

// min 0.5 ||r(x)||^2 subject to the optional box. Converged means a zero
// residual (||r||_inf <= residual_tolerance), or |J_i^T r| <= gradient_tolerance
// * ||J_i|| * ||r|| for every column not held by a bound, or an undamped
// Gauss-Newton step smaller than step_tolerance relative to ||x||.
SolveResult solve_least_squares(const ResidualProblem& problem, const VectorXd& x0,
                                const SolverSettings& settings = {});

// Central differences. Throws Error(kNonFiniteEvaluation) naming the
// coordinate whose perturbation produced a non-finite value.
MatrixXd numeric_jacobian(const ResidualFn& evaluator, int dimension_r,
                          const VectorXd& x, double h);

// Infinity norm of J^T r with components clamped to zero where the matching
// bound is active and the gradient points outward.
double projected_gradient_norm(const VectorXd& gradient, const VectorXd& x,
                               const std::optional<VectorXd>& lower,
                               const std::optional<VectorXd>& upper);

}  // namespace dexkin::kincore
