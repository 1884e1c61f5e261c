#include "dexkin/finger.hpp"

#include "dexkin/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

namespace dexkin {

using Eigen::Matrix3d;
using kincore::ResidualProblem;
using kincore::VectorXd;

Matrix3d rot_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Matrix3d rot_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Matrix3d r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Matrix3d rot_y_derivative(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Matrix3d r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}

Matrix3d rot_z_derivative(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Matrix3d r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

namespace {

constexpr double kZeroConfigTolerance = 1e-12;
constexpr double kTravelTolerance = 1e-12;
constexpr double kColdStep = 0.002;    // m, actuator increment of the cold-start walk
constexpr double kColdMargin = 0.5;    // rad, scan margin around the q3 range
constexpr double kToggleThreshold = 1e-12;

// Law-of-cosines length of the bent PSU link, with the universal-joint angle
// approximated by the MCP abduction.
double psu_squared_length(double q1, const FingerGeometry& g) {
  const double a = g.psu_proximal, b = g.psu_distal;
  return a * a + b * b - 2.0 * a * b * std::cos(std::numbers::pi - std::abs(q1));
}

double psu_squared_length_derivative(double q1, const FingerGeometry& g) {
  const double sign = q1 > 0.0 ? 1.0 : (q1 < 0.0 ? -1.0 : 0.0);
  return -2.0 * g.psu_proximal * g.psu_distal * std::sin(std::numbers::pi - std::abs(q1)) * sign;
}

Vector3d crank_point_Pmcp(double alpha, const Vector3d& offset_P3, const FingerGeometry& g) {
  return g.crank_pivot_Pmcp + rot_z(alpha) * offset_P3;
}

const char* actuator_name(int i) {
  static const char* names[] = {"d1", "d2", "d3"};
  return names[i];
}

void check_stage(const kincore::SolveResult& r, const char* stage) {
  if (!r.converged()) {
    throw Error(ErrorCode::kNoConvergence, std::string("stage ") + stage + " did not converge (" +
                                               kincore::to_string(r.status) + ", |r| = " +
                                               std::to_string(r.final_residual_norm) + ")");
  }
}

kincore::SolveResult solve_scalar(const std::function<double(double)>& value,
                                  const std::function<double(double)>& slope, double x0) {
  ResidualProblem p;
  p.dimension_x = 1;
  p.dimension_r = 1;
  p.residual = [&](const VectorXd& x, VectorXd& r) { r[0] = value(x[0]); };
  p.jacobian = [&](const VectorXd& x, kincore::MatrixXd& j) { j(0, 0) = slope(x[0]); };
  auto res = kincore::solve_root(p, VectorXd::Constant(1, x0), finger_solver_settings());
  // Two extra Newton steps take the root to round-off, so that stage outputs
  // are smooth functions of their inputs (the retargeting objective
  // differentiates through q4(q3)).
  if (res.converged()) {
    double x = res.x_solution[0], fx = value(x);
    for (int i = 0; i < 2; ++i) {
      const double s = slope(x);
      if (s == 0.0) break;
      const double xn = x - fx / s, fn = value(xn);
      if (!(std::abs(fn) < std::abs(fx))) break;
      x = xn;
      fx = fn;
    }
    res.x_solution[0] = x;
    res.final_residual_norm = std::abs(fx);
  }
  return res;
}

// Cold-start scalar solve. Scans [lo, hi] for a sign change whose slope has
// the sign the residual has on the rest branch, brackets it and polishes with
// Newton. Falls back to a plain solve from x0 when no such crossing exists.
kincore::SolveResult solve_on_branch(const std::function<double(double)>& value,
                                     const std::function<double(double)>& slope, double lo,
                                     double hi, double branch_slope, double x0) {
  constexpr int kSamples = 96;
  const double dir = branch_slope >= 0.0 ? 1.0 : -1.0;
  double best_a = 0.0, best_b = 0.0, best_gap = std::numeric_limits<double>::infinity();
  double xa = lo, fa = dir * value(lo);
  for (int i = 1; i <= kSamples; ++i) {
    const double xb = lo + (hi - lo) * i / kSamples;
    const double fb = dir * value(xb);
    if (fa <= 0.0 && fb > 0.0) {
      const double gap = std::abs(0.5 * (xa + xb) - x0);
      if (gap < best_gap) {
        best_gap = gap;
        best_a = xa;
        best_b = xb;
      }
    }
    xa = xb;
    fa = fb;
  }
  if (!std::isfinite(best_gap)) return solve_scalar(value, slope, x0);
  for (int i = 0; i < 40; ++i) {
    const double mid = 0.5 * (best_a + best_b);
    (dir * value(mid) > 0.0 ? best_b : best_a) = mid;
  }
  return solve_scalar(value, slope, 0.5 * (best_a + best_b));
}

}  // namespace

kincore::SolverSettings finger_solver_settings() {
  kincore::SolverSettings s;
  s.max_iterations = 60;
  s.residual_tolerance = 1e-15;
  s.step_tolerance = 1e-15;
  s.initial_damping = 1e-6;
  return s;
}

void FingerGeometry::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfigError, "finger geometry: " + what);
  };
  for (double len : {l1, l2, psu_proximal, psu_distal, pip_link, dip_link}) {
    if (!(len > 0.0) || !std::isfinite(len)) fail("link lengths must be strictly positive");
  }
  for (int i = 0; i < 3; ++i) {
    if (!(d_min[i] < d_max[i])) fail(std::string("travel range of ") + actuator_name(i) + " is empty");
    if (std::abs(actuator_axis[i].norm() - 1.0) > 1e-9) fail("actuator axis must be a unit vector");
  }
  for (const auto& lim : q_limits) {
    if (!(lim.lower <= lim.upper)) fail("joint limits reversed");
  }
  if (!(alpha_range.lower < alpha_range.upper)) fail("crank range reversed");

  const ConstraintResiduals rest = constraint_residuals({}, {}, {}, *this);
  if (rest.max_abs() > kZeroConfigTolerance) {
    fail("zero configuration is inconsistent (max residual " + std::to_string(rest.max_abs()) +
         " m^2)");
  }
}

Vector2d mcp_residual(double q1, double q2, const ActuatorState& d, const FingerGeometry& g) {
  const Matrix3d r = rot_y(q1) * rot_z(q2);
  const Vector3d e1 = g.mcp_origin_O + r * g.b1_Pmcp - (g.a1_rest_O - d.d1 * g.actuator_axis[0]);
  const Vector3d e2 = g.mcp_origin_O + r * g.b2_Pmcp - (g.a2_rest_O - d.d2 * g.actuator_axis[1]);
  return {e1.squaredNorm() - g.l1 * g.l1, e2.squaredNorm() - g.l2 * g.l2};
}

McpJacobian mcp_jacobian(double q1, double q2, const ActuatorState& d, const FingerGeometry& g) {
  const Matrix3d ry = rot_y(q1), rz = rot_z(q2);
  const Matrix3d r = ry * rz;
  const Matrix3d dr1 = rot_y_derivative(q1) * rz;
  const Matrix3d dr2 = ry * rot_z_derivative(q2);
  const Vector3d e1 = g.mcp_origin_O + r * g.b1_Pmcp - (g.a1_rest_O - d.d1 * g.actuator_axis[0]);
  const Vector3d e2 = g.mcp_origin_O + r * g.b2_Pmcp - (g.a2_rest_O - d.d2 * g.actuator_axis[1]);
  McpJacobian j;
  j.wrt_q << 2.0 * e1.dot(dr1 * g.b1_Pmcp), 2.0 * e1.dot(dr2 * g.b1_Pmcp),
      2.0 * e2.dot(dr1 * g.b2_Pmcp), 2.0 * e2.dot(dr2 * g.b2_Pmcp);
  j.wrt_d << 2.0 * e1.dot(g.actuator_axis[0]), 2.0 * e2.dot(g.actuator_axis[1]);
  return j;
}

double pip_fourbar_residual(double q3, double alpha, const FingerGeometry& g) {
  const Vector3d p5 = g.pip_origin_Pmcp + rot_z(q3) * g.pip_coupler_Ppip;
  const Vector3d p4 = crank_point_Pmcp(alpha, g.crank_coupler_P3, g);
  return (p5 - p4).squaredNorm() - g.pip_link * g.pip_link;
}

Vector2d pip_fourbar_gradient(double q3, double alpha, const FingerGeometry& g) {
  const Vector3d p5 = g.pip_origin_Pmcp + rot_z(q3) * g.pip_coupler_Ppip;
  const Vector3d p4 = crank_point_Pmcp(alpha, g.crank_coupler_P3, g);
  const Vector3d e = p5 - p4;
  return {2.0 * e.dot(rot_z_derivative(q3) * g.pip_coupler_Ppip),
          -2.0 * e.dot(rot_z_derivative(alpha) * g.crank_coupler_P3)};
}

double psu_residual(double alpha, double d3, double q1, double q2, const FingerGeometry& g) {
  const Vector3d p22_O =
      g.mcp_origin_O + rot_y(q1) * rot_z(q2) * crank_point_Pmcp(alpha, g.psu_anchor_P3, g);
  const Vector3d p1_O = g.p1_rest_O - d3 * g.actuator_axis[2];
  return (p22_O - p1_O).squaredNorm() - psu_squared_length(q1, g);
}

Vector4d psu_gradient(double alpha, double d3, double q1, double q2, const FingerGeometry& g) {
  const Matrix3d ry = rot_y(q1), rz = rot_z(q2);
  const Vector3d p22_Pmcp = crank_point_Pmcp(alpha, g.psu_anchor_P3, g);
  const Vector3d e = g.mcp_origin_O + ry * rz * p22_Pmcp - (g.p1_rest_O - d3 * g.actuator_axis[2]);
  return {2.0 * e.dot(ry * rz * rot_z_derivative(alpha) * g.psu_anchor_P3),
          2.0 * e.dot(g.actuator_axis[2]),
          2.0 * e.dot(rot_y_derivative(q1) * rz * p22_Pmcp) - psu_squared_length_derivative(q1, g),
          2.0 * e.dot(ry * rot_z_derivative(q2) * p22_Pmcp)};
}

double dip_residual(double q3, double q4, const FingerGeometry& g) {
  const Vector3d p6_Ppip = rot_z(q3).transpose() * g.dip_anchor_Pmcp;
  const Vector3d p7_Ppip = g.dip_origin_Ppip + rot_z(q4) * g.dip_coupler_Pdip;
  return (p6_Ppip - p7_Ppip).squaredNorm() - g.dip_link * g.dip_link;
}

Vector2d dip_gradient(double q3, double q4, const FingerGeometry& g) {
  const Vector3d p6_Ppip = rot_z(q3).transpose() * g.dip_anchor_Pmcp;
  const Vector3d p7_Ppip = g.dip_origin_Ppip + rot_z(q4) * g.dip_coupler_Pdip;
  const Vector3d e = p6_Ppip - p7_Ppip;
  return {2.0 * e.dot(rot_z_derivative(q3).transpose() * g.dip_anchor_Pmcp),
          -2.0 * e.dot(rot_z_derivative(q4) * g.dip_coupler_Pdip)};
}

double ConstraintResiduals::max_abs() const {
  return std::max({f.cwiseAbs().maxCoeff(), std::abs(g1), std::abs(g2), std::abs(h)});
}

ConstraintResiduals constraint_residuals(const FingerJointState& q, const InternalAngle& alpha,
                                         const ActuatorState& d, const FingerGeometry& g) {
  ConstraintResiduals r;
  r.f = mcp_residual(q.q1, q.q2, d, g);
  r.g1 = pip_fourbar_residual(q.q3, alpha.alpha, g);
  r.g2 = psu_residual(alpha.alpha, d.d3, q.q1, q.q2, g);
  r.h = dip_residual(q.q3, q.q4, g);
  return r;
}

double solve_dip(double q3, const FingerGeometry& g) {
  const Vector2d rest = dip_gradient(0.0, 0.0, g);
  const double guess = rest[1] != 0.0 ? -rest[0] / rest[1] * q3 : q3;
  const auto res = solve_scalar([&](double q4) { return dip_residual(q3, q4, g); },
                                [&](double q4) { return dip_gradient(q3, q4, g)[1]; }, guess);
  check_stage(res, "dip");
  return res.x_solution[0];
}

double dip_coupling_derivative(double q3, double q4, const FingerGeometry& g) {
  const Vector2d grad = dip_gradient(q3, q4, g);
  if (std::abs(grad[1]) < kToggleThreshold) {
    throw Error(ErrorCode::kSingularCoupling,
                "DIP four-bar at a toggle point (q3 = " + std::to_string(q3) + ")");
  }
  return -grad[0] / grad[1];
}

double dip_coupling_derivative(double q3, const FingerGeometry& g) {
  return dip_coupling_derivative(q3, solve_dip(q3, g), g);
}

double solve_crank_angle(double q3, const FingerGeometry& g, double guess) {
  const auto res = solve_scalar([&](double a) { return pip_fourbar_residual(q3, a, g); },
                                [&](double a) { return pip_fourbar_gradient(q3, a, g)[1]; }, guess);
  check_stage(res, "pip");
  return res.x_solution[0];
}

namespace {

FingerSolution fk_stages(const ActuatorState& d, const FingerGeometry& g,
                         const std::optional<FingerJointState>& warm) {
  const FingerJointState start = warm.value_or(FingerJointState{});

  ResidualProblem mcp;
  mcp.dimension_x = 2;
  mcp.dimension_r = 2;
  ActuatorState walk = d;
  mcp.residual = [&](const VectorXd& x, VectorXd& r) { r = mcp_residual(x[0], x[1], walk, g); };
  mcp.jacobian = [&](const VectorXd& x, kincore::MatrixXd& j) {
    j = mcp_jacobian(x[0], x[1], walk, g).wrt_q;
  };
  // Cold start: walk (d1, d2) out from the rest pose so that the MCP solve
  // stays on the branch through q = 0.
  Vector2d q12(start.q1, start.q2);
  if (!warm) {
    const Vector2d target(d.d1, d.d2);
    const int steps =
        std::max(1, static_cast<int>(std::ceil(target.cwiseAbs().maxCoeff() / kColdStep)));
    for (int k = 1; k < steps; ++k) {
      const Vector2d dk = target * (static_cast<double>(k) / steps);
      walk.d1 = dk[0];
      walk.d2 = dk[1];
      const auto r = kincore::solve_root(mcp, q12, finger_solver_settings());
      check_stage(r, "mcp");
      q12 = r.x_solution;
    }
    walk = d;
  }
  const auto mcp_res = kincore::solve_root(mcp, q12, finger_solver_settings());
  check_stage(mcp_res, "mcp");

  FingerSolution out;
  out.d = d;
  out.q.q1 = mcp_res.x_solution[0];
  out.q.q2 = mcp_res.x_solution[1];

  auto psu_value = [&](double a) { return psu_residual(a, d.d3, out.q.q1, out.q.q2, g); };
  auto psu_slope = [&](double a) { return psu_gradient(a, d.d3, out.q.q1, out.q.q2, g)[0]; };
  const auto psu_res =
      warm ? solve_scalar(psu_value, psu_slope, solve_crank_angle(start.q3, g))
           : solve_on_branch(psu_value, psu_slope, g.alpha_range.lower, g.alpha_range.upper,
                             psu_gradient(0.0, 0.0, 0.0, 0.0, g)[0], 0.0);
  check_stage(psu_res, "psu");
  out.alpha.alpha = psu_res.x_solution[0];

  auto pip_value = [&](double q3) { return pip_fourbar_residual(q3, out.alpha.alpha, g); };
  auto pip_slope = [&](double q3) { return pip_fourbar_gradient(q3, out.alpha.alpha, g)[0]; };
  const auto& q3_limit = g.q_limits[2];
  const auto pip_res =
      warm ? solve_scalar(pip_value, pip_slope, start.q3)
           : solve_on_branch(pip_value, pip_slope, q3_limit.lower - kColdMargin,
                             q3_limit.upper + kColdMargin, pip_fourbar_gradient(0.0, 0.0, g)[0], 0.0);
  check_stage(pip_res, "pip");
  out.q.q3 = pip_res.x_solution[0];

  if (warm) {
    const auto dip_res = solve_scalar([&](double q4) { return dip_residual(out.q.q3, q4, g); },
                                      [&](double q4) { return dip_gradient(out.q.q3, q4, g)[1]; },
                                      start.q4);
    check_stage(dip_res, "dip");
    out.q.q4 = dip_res.x_solution[0];
  } else {
    out.q.q4 = solve_dip(out.q.q3, g);
  }
  out.residuals = constraint_residuals(out.q, out.alpha, out.d, g);
  return out;
}

}  // namespace

FingerSolution finger_fk_solve(const ActuatorState& d, const FingerGeometry& g,
                               const std::optional<FingerJointState>& warm) {
  const Vector3d dv = d.vector();
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(dv[i]) || dv[i] < g.d_min[i] - kTravelTolerance ||
        dv[i] > g.d_max[i] + kTravelTolerance) {
      throw Error(ErrorCode::kOutOfTravel, std::string("actuator ") + actuator_name(i) + " = " +
                                               std::to_string(dv[i]) + " m is outside its travel");
    }
  }
  if (warm) return fk_stages(d, g, warm);

  return fk_stages(d, g, std::nullopt);
}

FingerJointState finger_fk(const ActuatorState& d, const FingerGeometry& g,
                           const std::optional<FingerJointState>& warm) {
  return finger_fk_solve(d, g, warm).q;
}

FingerSolution finger_ik_solve(const FingerJointState& q, const FingerGeometry& g,
                               const std::optional<ActuatorState>& warm) {
  const ActuatorState start = warm.value_or(ActuatorState{});
  FingerSolution out;
  out.q = q;
  out.q.q4 = solve_dip(q.q3, g);

  ResidualProblem mcp;
  mcp.dimension_x = 2;
  mcp.dimension_r = 2;
  mcp.residual = [&](const VectorXd& x, VectorXd& r) {
    r = mcp_residual(q.q1, q.q2, {x[0], x[1], 0.0}, g);
  };
  mcp.jacobian = [&](const VectorXd& x, kincore::MatrixXd& j) {
    const Vector2d dd = mcp_jacobian(q.q1, q.q2, {x[0], x[1], 0.0}, g).wrt_d;
    j.setZero();
    j(0, 0) = dd[0];
    j(1, 1) = dd[1];
  };
  const auto mcp_res = kincore::solve_root(mcp, Vector2d(start.d1, start.d2),
                                           finger_solver_settings());
  check_stage(mcp_res, "mcp");
  out.d.d1 = mcp_res.x_solution[0];
  out.d.d2 = mcp_res.x_solution[1];

  out.alpha.alpha = solve_crank_angle(q.q3, g);

  const auto psu_res = solve_scalar(
      [&](double d3) { return psu_residual(out.alpha.alpha, d3, q.q1, q.q2, g); },
      [&](double d3) { return psu_gradient(out.alpha.alpha, d3, q.q1, q.q2, g)[1]; }, start.d3);
  check_stage(psu_res, "psu");
  out.d.d3 = psu_res.x_solution[0];

  const Vector3d dv = out.d.vector();
  for (int i = 0; i < 3; ++i) {
    if (dv[i] < g.d_min[i] - kTravelTolerance || dv[i] > g.d_max[i] + kTravelTolerance) {
      throw Error(ErrorCode::kTravelExceeded,
                  std::string("joint command needs ") + actuator_name(i) + " = " +
                      std::to_string(dv[i]) + " m, outside [" + std::to_string(g.d_min[i]) +
                      ", " + std::to_string(g.d_max[i]) + "]");
    }
  }
  out.residuals = constraint_residuals(out.q, out.alpha, out.d, g);
  return out;
}

ActuatorState finger_ik(const FingerJointState& q, const FingerGeometry& g,
                        const std::optional<ActuatorState>& warm) {
  return finger_ik_solve(q, g, warm).d;
}

DigitKeypoints link_keypoints(const FingerJointState& q, const FingerGeometry& g) {
  const Matrix3d r1 = rot_y(q.q1) * rot_z(q.q2);
  const Matrix3d r2 = r1 * rot_z(q.q3);
  const Matrix3d r3 = r2 * rot_z(q.q4);
  DigitKeypoints k;
  k[0] = g.mcp_origin_O;
  k[1] = k[0] + r1 * g.pip_origin_Pmcp;
  k[2] = k[1] + r2 * g.dip_origin_Ppip;
  k[3] = k[2] + r3 * g.tip_Pdip;
  return k;
}

DigitKeypointJacobian link_keypoints_jacobian(const FingerJointState& q, const FingerGeometry& g) {
  const Matrix3d ry = rot_y(q.q1), rz2 = rot_z(q.q2), rz3 = rot_z(q.q3), rz4 = rot_z(q.q4);
  const Matrix3d r1 = ry * rz2;
  const std::array<Matrix3d, 2> dr1 = {rot_y_derivative(q.q1) * rz2, ry * rot_z_derivative(q.q2)};
  const Matrix3d dr2_q3 = r1 * rot_z_derivative(q.q3);

  DigitKeypointJacobian jac;
  for (auto& block : jac) block.setZero();
  for (int k = 0; k < 2; ++k) {
    const Vector3d pip = dr1[k] * g.pip_origin_Pmcp;
    const Vector3d dip = pip + dr1[k] * rz3 * g.dip_origin_Ppip;
    jac[1].col(k) = pip;
    jac[2].col(k) = dip;
    jac[3].col(k) = dip + dr1[k] * rz3 * rz4 * g.tip_Pdip;
  }
  jac[2].col(2) = dr2_q3 * g.dip_origin_Ppip;
  jac[3].col(2) = jac[2].col(2) + dr2_q3 * rz4 * g.tip_Pdip;
  jac[3].col(3) = r1 * rz3 * rot_z_derivative(q.q4) * g.tip_Pdip;
  return jac;
}

}  // namespace dexkin
