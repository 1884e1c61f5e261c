#include "dexkin/kincore.hpp"

#include "dexkin/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dexkin::kincore {

namespace {

constexpr double kDampingCeiling = 1e20;
const double kReductionResolution = std::sqrt(std::numeric_limits<double>::epsilon());

bool project(VectorXd& x, const std::optional<VectorXd>& lower,
             const std::optional<VectorXd>& upper) {
  bool moved = false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (lower && x[i] < (*lower)[i]) {
      x[i] = (*lower)[i];
      moved = true;
    }
    if (upper && x[i] > (*upper)[i]) {
      x[i] = (*upper)[i];
      moved = true;
    }
  }
  return moved;
}

bool at_lower(const VectorXd& x, const std::optional<VectorXd>& lower, Eigen::Index i) {
  return lower && x[i] <= (*lower)[i];
}

bool at_upper(const VectorXd& x, const std::optional<VectorXd>& upper, Eigen::Index i) {
  return upper && x[i] >= (*upper)[i];
}

class Evaluator {
 public:
  Evaluator(const ResidualProblem& problem, const SolverSettings& settings)
      : problem_(problem), settings_(settings) {}

  bool residual(const VectorXd& x, VectorXd& r) const {
    r.resize(problem_.dimension_r);
    problem_.residual(x, r);
    return r.allFinite();
  }

  bool jacobian(const VectorXd& x, MatrixXd& jac) const {
    if (problem_.jacobian) {
      jac.resize(problem_.dimension_r, problem_.dimension_x);
      problem_.jacobian(x, jac);
      return jac.allFinite();
    }
    try {
      jac = numeric_jacobian(problem_.residual, problem_.dimension_r, x,
                             settings_.finite_difference_step);
    } catch (const Error&) {
      return false;
    }
    return true;
  }

 private:
  const ResidualProblem& problem_;
  const SolverSettings& settings_;
};

bool free_normal_matrix_singular(const MatrixXd& normal, const std::vector<Eigen::Index>& free) {
  const auto n = static_cast<Eigen::Index>(free.size());
  if (n == 0) return true;
  MatrixXd sub(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) sub(a, b) = normal(free[a], free[b]);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sub, Eigen::EigenvaluesOnly);
  const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double smallest = eig.eigenvalues().minCoeff();
  return largest == 0.0 || smallest <= 1e-14 * largest;
}

SolveResult levenberg_marquardt(const ResidualProblem& problem, const VectorXd& x0,
                                const SolverSettings& settings, bool least_squares) {
  settings.validate();
  problem.validate(!least_squares);
  if (x0.size() != problem.dimension_x) {
    throw Error(ErrorCode::kInvalidArgument, "initial point has wrong dimension");
  }

  const auto& lower = problem.lower_bounds;
  const auto& upper = problem.upper_bounds;
  Evaluator eval(problem, settings);

  SolveResult result;
  VectorXd x = x0;
  result.initial_point_projected = project(x, lower, upper);
  result.x_solution = x;

  VectorXd r;
  if (!x.allFinite() || !eval.residual(x, r)) {
    result.status = SolveStatus::kDivergedNaN;
    result.final_residual_norm = std::numeric_limits<double>::quiet_NaN();
    return result;
  }

  MatrixXd jac;
  VectorXd gradient;
  MatrixXd normal;
  double cost = 0.5 * r.squaredNorm();
  double mu = -1.0;

  // Scale-free first-order test: the cosine between r and each column of J
  // that is not blocked by a bound.
  auto converged = [&]() {
    if (r.lpNorm<Eigen::Infinity>() <= settings.residual_tolerance) return true;
    if (!least_squares) return false;
    const double rn = r.norm();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (at_lower(x, lower, i) && gradient[i] > 0.0) continue;
      if (at_upper(x, upper, i) && gradient[i] < 0.0) continue;
      const double cn = jac.col(i).norm();
      if (cn > 0.0 && std::abs(gradient[i]) > settings.gradient_tolerance * cn * rn) return false;
    }
    return true;
  };

  auto refresh_linearization = [&]() {
    if (!eval.jacobian(x, jac)) return false;
    gradient.noalias() = jac.transpose() * r;
    normal.noalias() = jac.transpose() * jac;
    return true;
  };

  if (!refresh_linearization()) {
    result.status = SolveStatus::kDivergedNaN;
    result.final_residual_norm = r.lpNorm<Eigen::Infinity>();
    return result;
  }

  std::vector<Eigen::Index> free;

  // The undamped (minimum-norm) step on the free set is negligible in x, or
  // promises a relative cost reduction floating point cannot resolve.
  auto gauss_newton_negligible = [&](const MatrixXd& system, const VectorXd& rhs) {
    const VectorXd gn = system.completeOrthogonalDecomposition().solve(rhs);
    if (!gn.allFinite()) return false;
    VectorXd target = x;
    for (Eigen::Index a = 0; a < gn.size(); ++a) target[free[a]] += gn[a];
    project(target, lower, upper);
    return (target - x).norm() <= settings.step_tolerance * (x.norm() + settings.step_tolerance) ||
           0.5 * rhs.dot(gn) <= kReductionResolution * cost;
  };

  VectorXd trial(x.size());
  VectorXd r_trial;
  result.status = SolveStatus::kMaxIterations;

  while (true) {
    if (converged()) {
      result.status = SolveStatus::kConverged;
      break;
    }
    if (result.iterations >= settings.max_iterations) {
      result.status = SolveStatus::kMaxIterations;
      break;
    }

    free.clear();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (at_lower(x, lower, i) && gradient[i] > 0.0) continue;
      if (at_upper(x, upper, i) && gradient[i] < 0.0) continue;
      free.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    double scale = 0.0;
    for (auto i : free) scale = std::max(scale, normal(i, i));
    if (nf == 0 || scale == 0.0) {
      result.status = SolveStatus::kSingularJacobian;
      break;
    }
    if (mu < 0.0) mu = settings.initial_damping * scale;

    MatrixXd system(nf, nf);
    VectorXd rhs(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      rhs[a] = -gradient[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) system(a, b) = normal(free[a], free[b]);
    }

    bool accepted = false;
    bool stalled = false;
    bool gauss_newton_stall = false;
    bool reduction_negligible = false;
    bool saw_nan = false;
    while (mu <= kDampingCeiling * scale) {
      MatrixXd damped = system;
      damped.diagonal().array() += mu;
      Eigen::LDLT<MatrixXd> ldlt(damped);
      VectorXd step = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        mu *= 10.0;
        continue;
      }
      trial = x;
      for (Eigen::Index a = 0; a < nf; ++a) trial[free[a]] += step[a];
      project(trial, lower, upper);

      if ((trial - x).norm() <= settings.step_tolerance * (x.norm() + settings.step_tolerance)) {
        stalled = true;
        gauss_newton_stall = least_squares && gauss_newton_negligible(system, rhs);
        break;
      }
      if (!eval.residual(trial, r_trial)) {
        saw_nan = true;
        mu *= 10.0;
        continue;
      }
      const double trial_cost = 0.5 * r_trial.squaredNorm();
      if (trial_cost < cost) {
        reduction_negligible = least_squares && cost - trial_cost <= kReductionResolution * cost &&
                               gauss_newton_negligible(system, rhs);
        x = trial;
        r.swap(r_trial);
        cost = trial_cost;
        mu = std::max(mu / 10.0, 1e-300);
        accepted = true;
        break;
      }
      mu *= 10.0;
    }
    ++result.iterations;

    if (accepted) {
      if (!refresh_linearization()) {
        result.status = SolveStatus::kDivergedNaN;
        break;
      }
      if (reduction_negligible) {
        result.status = SolveStatus::kConverged;
        break;
      }
      continue;
    }
    if (converged() || gauss_newton_stall) {
      result.status = SolveStatus::kConverged;
    } else if (saw_nan && !stalled) {
      result.status = SolveStatus::kDivergedNaN;
    } else if (free_normal_matrix_singular(normal, free)) {
      result.status = SolveStatus::kSingularJacobian;
    } else {
      result.status = SolveStatus::kMaxIterations;
    }
    break;
  }

  result.x_solution = x;
  result.final_residual_norm = r.lpNorm<Eigen::Infinity>();
  return result;
}

}  // namespace

void ResidualProblem::validate(bool square) const {
  if (dimension_x < 1 || dimension_r < 1) {
    throw Error(ErrorCode::kInvalidArgument, "problem dimensions must be positive");
  }
  if (square && dimension_r != dimension_x) {
    throw Error(ErrorCode::kInvalidArgument, "root solve requires a square system");
  }
  if (!square && dimension_r < dimension_x) {
    throw Error(ErrorCode::kInvalidArgument,
                "least squares requires at least as many residuals as unknowns");
  }
  if (!residual) throw Error(ErrorCode::kInvalidArgument, "missing residual evaluator");
  for (const auto* b : {&lower_bounds, &upper_bounds}) {
    if (*b && (*b)->size() != dimension_x) {
      throw Error(ErrorCode::kInvalidArgument, "bound vector has wrong dimension");
    }
  }
  if (lower_bounds && upper_bounds && ((*lower_bounds).array() > (*upper_bounds).array()).any()) {
    throw Error(ErrorCode::kInvalidArgument, "lower bound exceeds upper bound");
  }
}

void SolverSettings::validate() const {
  if (max_iterations < 1 || !(residual_tolerance > 0.0) || !(step_tolerance > 0.0) ||
      !(gradient_tolerance > 0.0) ||
      !(initial_damping > 0.0) || !(finite_difference_step > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "solver settings must be strictly positive");
  }
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "Converged";
    case SolveStatus::kMaxIterations: return "MaxIterations";
    case SolveStatus::kSingularJacobian: return "SingularJacobian";
    case SolveStatus::kDivergedNaN: return "DivergedNaN";
  }
  return "Unknown";
}

SolveResult solve_root(const ResidualProblem& problem, const VectorXd& x0,
                       const SolverSettings& settings) {
  return levenberg_marquardt(problem, x0, settings, false);
}

SolveResult solve_least_squares(const ResidualProblem& problem, const VectorXd& x0,
                                const SolverSettings& settings) {
  return levenberg_marquardt(problem, x0, settings, true);
}

MatrixXd numeric_jacobian(const ResidualFn& evaluator, int dimension_r, const VectorXd& x,
                          double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  MatrixXd jac(dimension_r, x.size());
  VectorXd xp = x;
  VectorXd rp(dimension_r);
  VectorXd rm(dimension_r);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    evaluator(xp, rp);
    xp[i] = x[i] - h;
    evaluator(xp, rm);
    xp[i] = x[i];
    if (!rp.allFinite() || !rm.allFinite()) {
      throw Error(ErrorCode::kNonFiniteEvaluation,
                  "non-finite residual when perturbing coordinate " + std::to_string(i));
    }
    jac.col(i) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

double projected_gradient_norm(const VectorXd& gradient, const VectorXd& x,
                               const std::optional<VectorXd>& lower,
                               const std::optional<VectorXd>& upper) {
  double norm = 0.0;
  for (Eigen::Index i = 0; i < gradient.size(); ++i) {
    double g = gradient[i];
    if (at_lower(x, lower, i) && g > 0.0) g = 0.0;
    if (at_upper(x, upper, i) && g < 0.0) g = 0.0;
    norm = std::max(norm, std::abs(g));
  }
  return norm;
}

}  // namespace dexkin::kincore
