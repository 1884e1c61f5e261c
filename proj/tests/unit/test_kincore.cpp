#include "dexkin/error.hpp"
#include "dexkin/kincore.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace dexkin;
using namespace dexkin::kincore;

namespace {

ResidualProblem circle_and_line() {
  // x^2 + y^2 = 4 and y = x: root (sqrt 2, sqrt 2) from the first quadrant.
  ResidualProblem p;
  p.dimension_x = 2;
  p.dimension_r = 2;
  p.residual = [](const VectorXd& x, VectorXd& r) {
    r[0] = x[0] * x[0] + x[1] * x[1] - 4.0;
    r[1] = x[1] - x[0];
  };
  p.jacobian = [](const VectorXd& x, MatrixXd& j) {
    j << 2 * x[0], 2 * x[1], -1, 1;
  };
  return p;
}

}  // namespace

TEST_CASE("square root solve with an analytic Jacobian") {
  const auto res = solve_root(circle_and_line(), Eigen::Vector2d(1.0, 0.5));
  REQUIRE(res.converged());
  CHECK(res.x_solution[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(res.x_solution[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(res.final_residual_norm <= 1e-10);
}

TEST_CASE("root solve follows the basin of the initial guess") {
  const auto res = solve_root(circle_and_line(), Eigen::Vector2d(-1.0, -0.5));
  REQUIRE(res.converged());
  CHECK(res.x_solution[0] == doctest::Approx(-std::sqrt(2.0)));
}

TEST_CASE("finite-difference Jacobian is used when none is given") {
  auto p = circle_and_line();
  p.jacobian = nullptr;
  const auto res = solve_root(p, Eigen::Vector2d(1.0, 0.5));
  REQUIRE(res.converged());
  CHECK(res.x_solution[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("least squares stops on the bound with a zero projected gradient") {
  // min (x - 2)^2 + (y + 1)^2 with x <= 1, y >= 0: solution (1, 0).
  ResidualProblem p;
  p.dimension_x = 2;
  p.dimension_r = 2;
  p.residual = [](const VectorXd& x, VectorXd& r) { r << x[0] - 2.0, x[1] + 1.0; };
  p.jacobian = [](const VectorXd&, MatrixXd& j) { j.setIdentity(); };
  p.lower_bounds = Eigen::Vector2d(-10.0, 0.0);
  p.upper_bounds = Eigen::Vector2d(1.0, 10.0);
  const auto res = solve_least_squares(p, Eigen::Vector2d(0.0, 3.0));
  REQUIRE(res.converged());
  CHECK(res.x_solution[0] == 1.0);
  CHECK(res.x_solution[1] == 0.0);
  CHECK_FALSE(res.initial_point_projected);
}

TEST_CASE("an infeasible start is projected and reported") {
  ResidualProblem p;
  p.dimension_x = 1;
  p.dimension_r = 1;
  p.residual = [](const VectorXd& x, VectorXd& r) { r[0] = x[0]; };
  p.lower_bounds = VectorXd::Constant(1, 0.5);
  p.upper_bounds = VectorXd::Constant(1, 2.0);
  const auto res = solve_least_squares(p, VectorXd::Constant(1, 5.0));
  CHECK(res.initial_point_projected);
  CHECK(res.x_solution[0] == 0.5);
}

TEST_CASE("projected gradient ignores components pushing out of the box") {
  const Eigen::Vector3d x(0.0, 1.0, 0.5);
  const Eigen::Vector3d lo(0.0, 0.0, 0.0), hi(1.0, 1.0, 1.0);
  // Descent direction is -g: outward at the lower bound when g > 0.
  CHECK(projected_gradient_norm(Eigen::Vector3d(3.0, 0.0, 0.0), x, VectorXd(lo), VectorXd(hi)) == 0.0);
  CHECK(projected_gradient_norm(Eigen::Vector3d(-3.0, 0.0, 0.0), x, VectorXd(lo), VectorXd(hi)) == 3.0);
  CHECK(projected_gradient_norm(Eigen::Vector3d(0.0, -2.0, 0.0), x, VectorXd(lo), VectorXd(hi)) == 0.0);
  CHECK(projected_gradient_norm(Eigen::Vector3d(0.0, 0.0, -0.25), x, VectorXd(lo), VectorXd(hi)) == 0.25);
}

TEST_CASE("numeric Jacobian matches the derivative of sin") {
  const ResidualFn fn = [](const VectorXd& x, VectorXd& r) { r[0] = std::sin(x[0]) * x[1]; };
  const MatrixXd j = numeric_jacobian(fn, 1, Eigen::Vector2d(0.3, 2.0), 1e-6);
  CHECK(j(0, 0) == doctest::Approx(2.0 * std::cos(0.3)).epsilon(1e-9));
  CHECK(j(0, 1) == doctest::Approx(std::sin(0.3)).epsilon(1e-9));
}

TEST_CASE("numeric Jacobian names the coordinate that went non-finite") {
  const ResidualFn fn = [](const VectorXd& x, VectorXd& r) { r[0] = x[1] > 0.0 ? std::log(-1.0) : 0.0; };
  try {
    numeric_jacobian(fn, 1, Eigen::Vector2d(0.0, 0.0), 1e-6);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteEvaluation);
    CHECK(std::string(e.what()).find('1') != std::string::npos);
  }
}

TEST_CASE("non-finite residuals stop the solver") {
  ResidualProblem p;
  p.dimension_x = 1;
  p.dimension_r = 1;
  p.residual = [](const VectorXd&, VectorXd& r) { r[0] = std::numeric_limits<double>::quiet_NaN(); };
  p.jacobian = [](const VectorXd&, MatrixXd& j) { j(0, 0) = 1.0; };
  const auto res = solve_root(p, VectorXd::Zero(1));
  CHECK(res.status == SolveStatus::kDivergedNaN);
}

TEST_CASE("a flat residual is reported as singular") {
  ResidualProblem p;
  p.dimension_x = 1;
  p.dimension_r = 1;
  p.residual = [](const VectorXd&, VectorXd& r) { r[0] = 1.0; };
  p.jacobian = [](const VectorXd&, MatrixXd& j) { j(0, 0) = 0.0; };
  const auto res = solve_root(p, VectorXd::Zero(1));
  CHECK_FALSE(res.converged());
}

TEST_CASE("inconsistent problems are rejected") {
  auto p = circle_and_line();
  p.dimension_r = 3;
  CHECK_THROWS_AS(solve_root(p, Eigen::Vector2d(1, 1)), Error);
  p = circle_and_line();
  CHECK_THROWS_AS(solve_root(p, Eigen::Vector3d(1, 1, 1)), Error);
  p.lower_bounds = Eigen::Vector2d(1.0, 1.0);
  p.upper_bounds = Eigen::Vector2d(0.0, 2.0);
  CHECK_THROWS_AS(solve_least_squares(p, Eigen::Vector2d(1, 1)), Error);
  SolverSettings s;
  s.max_iterations = 0;
  CHECK_THROWS_AS(solve_root(circle_and_line(), Eigen::Vector2d(1, 1), s), Error);
}

namespace {

// y = a exp(b t) against data that no (a, b) fits exactly.
ResidualProblem exponential_fit(double weight) {
  ResidualProblem p;
  p.dimension_x = 2;
  p.dimension_r = 8;
  p.residual = [weight](const VectorXd& x, VectorXd& r) {
    static const double y[8] = {1.0, 1.4, 1.7, 2.6, 3.1, 4.9, 5.6, 8.5};
    for (int i = 0; i < 8; ++i) r[i] = weight * (x[0] * std::exp(x[1] * 0.25 * i) - y[i]);
  };
  p.jacobian = [weight](const VectorXd& x, MatrixXd& j) {
    for (int i = 0; i < 8; ++i) {
      const double t = 0.25 * i;
      j(i, 0) = weight * std::exp(x[1] * t);
      j(i, 1) = weight * x[0] * t * std::exp(x[1] * t);
    }
  };
  return p;
}

}  // namespace

TEST_CASE("least squares with a nonzero optimum matches the normal equations") {
  // Linear: r = A x - b, oracle from a QR solve.
  MatrixXd a(6, 3);
  a << 1, 0, 2, 0, 1, -1, 3, 1, 0, 1, 1, 1, -2, 0, 1, 0, 4, 1;
  VectorXd b(6);
  b << 1, -2, 0.5, 3, 1, -1;
  ResidualProblem p;
  p.dimension_x = 3;
  p.dimension_r = 6;
  p.residual = [&](const VectorXd& x, VectorXd& r) { r = a * x - b; };
  p.jacobian = [&](const VectorXd&, MatrixXd& j) { j = a; };
  const VectorXd oracle = a.colPivHouseholderQr().solve(b);
  const auto res = solve_least_squares(p, VectorXd::Zero(3));
  REQUIRE(res.converged());
  CHECK((res.x_solution - oracle).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(res.final_residual_norm > 0.1);
}

TEST_CASE("least squares termination does not depend on the residual scale") {
  const Eigen::Vector2d x0(1.0, 0.5);
  const auto unit = solve_least_squares(exponential_fit(1.0), x0);
  REQUIRE(unit.converged());
  for (double w : {1e-6, 1e-3, 1e3}) {
    const auto scaled = solve_least_squares(exponential_fit(w), x0);
    REQUIRE(scaled.converged());
    CHECK((scaled.x_solution - unit.x_solution).cwiseAbs().maxCoeff() <= 1e-7);
  }
  // First-order check at the optimum, independent of the solver.
  const auto p = exponential_fit(1.0);
  VectorXd r(8);
  MatrixXd j(8, 2);
  p.residual(unit.x_solution, r);
  p.jacobian(unit.x_solution, j);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(j.col(i).dot(r)) <= 1e-7 * j.col(i).norm() * r.norm());
}

TEST_CASE("a warm start at a nonzero optimum returns immediately") {
  const auto first = solve_least_squares(exponential_fit(1.0), Eigen::Vector2d(1.0, 0.5));
  REQUIRE(first.converged());
  const auto again = solve_least_squares(exponential_fit(1.0), first.x_solution);
  CHECK(again.converged());
  CHECK(again.iterations <= 2);
}

TEST_CASE("gradient tolerance must be positive") {
  SolverSettings s;
  s.gradient_tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
}
