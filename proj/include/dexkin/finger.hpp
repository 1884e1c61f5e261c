#pragma once

// Transmission kinematics of one linkage-driven digit.
//
// Frames (all lengths in metres, angles in radians):
//   O     digit base frame. Its origin is the projection of the MCP joint onto
//         the plane holding the rest positions of the three lead-screw ends.
//   Pmcp  proximal phalanx, R_O_Pmcp = Ry(q1) * Rz(q2), origin p_Pmcp_O.
//   P3    PIP input crank on the proximal phalanx, R_Pmcp_P3 = Rz(alpha).
//   Ppip  middle phalanx, R_Pmcp_Ppip = Rz(q3).
//   Pdip  distal phalanx, R_Ppip_Pdip = Rz(q4).
//
// Four scalar constraint families tie joints to actuators:
//   f  (2)  two PSS chains, MCP (q1, q2) <-> (d1, d2)
//   g2 (1)  PSU chain, crank angle alpha <-> d3 (depends on q1, q2)
//   g1 (1)  crossed four-bar, alpha <-> q3
//   h  (1)  crossed four-bar, q3 <-> q4 (passive DIP)
// Every residual is written in squared form |a - b|^2 - L^2.

#include "dexkin/kincore.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>

namespace dexkin {

using Eigen::Matrix2d;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::Vector4d;

struct JointLimit {
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double v, double tol = 0.0) const { return v >= lower - tol && v <= upper + tol; }
  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
};

struct FingerGeometry {
  // MCP: two PSS chains.
  Vector3d a1_rest_O = Vector3d::Zero();  // A10, first lead-screw end at d1 = 0
  Vector3d a2_rest_O = Vector3d::Zero();  // A20
  Vector3d b1_Pmcp = Vector3d::Zero();    // ball joint B1 on the proximal phalanx
  Vector3d b2_Pmcp = Vector3d::Zero();    // B2
  Vector3d mcp_origin_O = Vector3d::Zero();
  double l1 = 0.0;  // |A1 B1|
  double l2 = 0.0;  // |A2 B2|

  // PIP: PSU chain and crossed four-bar.
  Vector3d p1_rest_O = Vector3d::Zero();     // P10, third lead-screw end at d3 = 0
  Vector3d crank_pivot_Pmcp = Vector3d::Zero();  // P3
  Vector3d psu_anchor_P3 = Vector3d::Zero();     // P22
  Vector3d crank_coupler_P3 = Vector3d::Zero();  // P4
  Vector3d pip_origin_Pmcp = Vector3d::Zero();   // Ppip
  Vector3d pip_coupler_Ppip = Vector3d::Zero();  // P5
  double psu_proximal = 0.0;  // |P1 P21|
  double psu_distal = 0.0;    // |P21 P22|
  double pip_link = 0.0;      // |P4 P5|

  // DIP: crossed four-bar. P6 sits on the proximal phalanx; it is stored
  // relative to Ppip with the proximal phalanx (Pmcp) orientation.
  Vector3d dip_anchor_Pmcp = Vector3d::Zero();   // P6 - Ppip
  Vector3d dip_origin_Ppip = Vector3d::Zero();   // Pdip
  Vector3d dip_coupler_Pdip = Vector3d::Zero();  // P7
  double dip_link = 0.0;                         // |P6 P7|

  Vector3d tip_Pdip = Vector3d::Zero();

  // Retraction direction of each lead screw in O: A_i = A_i0 - d_i * axis_i.
  std::array<Vector3d, 3> actuator_axis = {Vector3d::UnitX(), Vector3d::UnitX(),
                                           Vector3d::UnitX()};
  Vector3d d_min = Vector3d::Constant(-0.01);
  Vector3d d_max = Vector3d::Constant(0.01);
  std::array<JointLimit, 4> q_limits{};
  JointLimit alpha_range{-1.5707963267948966, 1.5707963267948966};

  // Throws Error(kConfigError) on non-positive lengths, reversed ranges, a
  // non-unit actuator axis or a zero-configuration residual above tolerance.
  void validate() const;
};

struct FingerJointState {
  double q1 = 0.0;  // MCP abduction/adduction
  double q2 = 0.0;  // MCP flexion/extension
  double q3 = 0.0;  // PIP flexion
  double q4 = 0.0;  // DIP flexion, passively coupled to q3

  Vector4d vector() const { return {q1, q2, q3, q4}; }
  static FingerJointState from(const Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
  bool operator==(const FingerJointState&) const = default;
};

struct ActuatorState {
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;

  Vector3d vector() const { return {d1, d2, d3}; }
  static ActuatorState from(const Vector3d& v) { return {v[0], v[1], v[2]}; }
  bool operator==(const ActuatorState&) const = default;
};

struct InternalAngle {
  double alpha = 0.0;
};

// ---- residual systems -----------------------------------------------------

Vector2d mcp_residual(double q1, double q2, const ActuatorState& d, const FingerGeometry& g);

struct McpJacobian {
  Matrix2d wrt_q;   // columns q1, q2
  Vector2d wrt_d;   // df1/dd1, df2/dd2 (the cross terms vanish)
};
McpJacobian mcp_jacobian(double q1, double q2, const ActuatorState& d, const FingerGeometry& g);

double pip_fourbar_residual(double q3, double alpha, const FingerGeometry& g);
// (dg1/dq3, dg1/dalpha)
Vector2d pip_fourbar_gradient(double q3, double alpha, const FingerGeometry& g);

double psu_residual(double alpha, double d3, double q1, double q2, const FingerGeometry& g);
// (dg2/dalpha, dg2/dd3, dg2/dq1, dg2/dq2)
Vector4d psu_gradient(double alpha, double d3, double q1, double q2, const FingerGeometry& g);

double dip_residual(double q3, double q4, const FingerGeometry& g);
// (dh/dq3, dh/dq4)
Vector2d dip_gradient(double q3, double q4, const FingerGeometry& g);

// ---- solves -----------------------------------------------------------------

// Settings used for every stage solve. The tolerance is absolute on the
// squared-form residuals (m^2) and sits a few decades above round-off.
kincore::SolverSettings finger_solver_settings();

// q4 on the coupled branch through q4(0) = 0. The starting guess depends on
// q3 only, so the result is a deterministic function of q3.
double solve_dip(double q3, const FingerGeometry& g);

// dq4/dq3 along h(q3, q4(q3)) = 0. Throws Error(kSingularCoupling) at a toggle.
double dip_coupling_derivative(double q3, const FingerGeometry& g);
double dip_coupling_derivative(double q3, double q4, const FingerGeometry& g);

// alpha with g1(q3, alpha) = 0, starting from `guess`.
double solve_crank_angle(double q3, const FingerGeometry& g, double guess = 0.0);

struct ConstraintResiduals {
  Vector2d f = Vector2d::Zero();
  double g1 = 0.0;
  double g2 = 0.0;
  double h = 0.0;

  double max_abs() const;
};

ConstraintResiduals constraint_residuals(const FingerJointState& q, const InternalAngle& alpha,
                                         const ActuatorState& d, const FingerGeometry& g);

struct FingerSolution {
  FingerJointState q;
  InternalAngle alpha;
  ActuatorState d;
  ConstraintResiduals residuals;
};

// Actuators -> joints. Stage order: MCP, PSU, PIP four-bar, DIP four-bar.
// Throws Error(kOutOfTravel) naming the actuator, Error(kNoConvergence)
// naming the stage.
FingerSolution finger_fk_solve(const ActuatorState& d, const FingerGeometry& g,
                               const std::optional<FingerJointState>& warm = std::nullopt);
FingerJointState finger_fk(const ActuatorState& d, const FingerGeometry& g,
                           const std::optional<FingerJointState>& warm = std::nullopt);

// Joints -> actuators. q4 is recomputed from q3. Throws Error(kTravelExceeded)
// naming the actuator when the command maps outside the lead-screw range.
FingerSolution finger_ik_solve(const FingerJointState& q, const FingerGeometry& g,
                               const std::optional<ActuatorState>& warm = std::nullopt);
ActuatorState finger_ik(const FingerJointState& q, const FingerGeometry& g,
                        const std::optional<ActuatorState>& warm = std::nullopt);

// ---- keypoints --------------------------------------------------------------

enum class DigitPoint { kMcp = 0, kPip = 1, kDip = 2, kTip = 3 };

using DigitKeypoints = std::array<Vector3d, 4>;
// d(keypoint)/d(q1..q4), one 3x4 block per keypoint.
using DigitKeypointJacobian = std::array<Eigen::Matrix<double, 3, 4>, 4>;

DigitKeypoints link_keypoints(const FingerJointState& q, const FingerGeometry& g);
DigitKeypointJacobian link_keypoints_jacobian(const FingerJointState& q, const FingerGeometry& g);

// Rotation helpers shared with the hand and the tests.
Eigen::Matrix3d rot_y(double angle);
Eigen::Matrix3d rot_z(double angle);
Eigen::Matrix3d rot_y_derivative(double angle);
Eigen::Matrix3d rot_z_derivative(double angle);

}  // namespace dexkin
