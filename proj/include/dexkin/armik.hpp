#pragma once

// Differential IK for a 7-DoF serial arm. Each control tick solves
//
//   min  |Je qd - lambda dx|^2_W0 + w1 |Ja qd - da|^2 + w2 |qd|^2 + w3 |qd - qd_prev|^2
//   s.t. f_m <= qd <= f_M
//
// where dx is the tool pose error twist divided by dt, da the arm-angle error
// divided by dt and [f_m, f_M] the joint velocity box tightened near the
// position limits.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <utility>

namespace dexkin {

inline constexpr int kArmJoints = 7;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector7d = Eigen::Matrix<double, kArmJoints, 1>;
using Matrix67d = Eigen::Matrix<double, 6, kArmJoints>;
using RowVector7d = Eigen::Matrix<double, 1, kArmJoints>;
using Matrix7d = Eigen::Matrix<double, kArmJoints, kArmJoints>;

// Serial chain in modified Denavit-Hartenberg form: frame i is reached from
// frame i-1 by Rx(alpha_i) Tx(a_i) Rz(q_i) Tz(d_i). Joint i turns about z_i.
struct ArmModel {
  std::array<double, kArmJoints> a{};
  std::array<double, kArmJoints> d{};
  std::array<double, kArmJoints> alpha{};
  Vector7d q_lower = Vector7d::Zero();
  Vector7d q_upper = Vector7d::Zero();
  Vector7d velocity_limit = Vector7d::Zero();   // rad/s
  Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();  // flange -> tool
  // Joints whose frame origins serve as shoulder, elbow and wrist centres.
  int shoulder_joint = 1;
  int elbow_joint = 3;
  int wrist_joint = 5;

  void validate() const;
};

// A 7-DoF arm with FR3-like kinematics and limits.
ArmModel reference_arm();
Vector7d reference_arm_home();

struct ArmIKConfig {
  double lambda_scale = 1.0;
  Vector6d w0 = Vector6d::Ones();   // diagonal pose weight, (position, rotation)
  double w1 = 0.05;
  double w2 = 1e-3;
  double w3 = 1e-2;
  double dt = 0.02;                 // s
  double velocity_damper_margin = 0.05;  // rad
  double damper_gain = 1.0;
  Eigen::Vector3d vertical = Eigen::Vector3d::UnitZ();

  void validate() const;
};

struct ArmState {
  Vector7d q = Vector7d::Zero();
  Vector7d q_dot_prev = Vector7d::Zero();
};

// Frame origins and z axes of the seven joints, then the tool frame.
struct ArmKinematics {
  std::array<Eigen::Vector3d, kArmJoints> origin;
  std::array<Eigen::Vector3d, kArmJoints> axis;
  Eigen::Isometry3d tool;
};

ArmKinematics arm_kinematics(const Vector7d& q, const ArmModel& model);
Eigen::Isometry3d arm_fk(const Vector7d& q, const ArmModel& model);

// Geometric Jacobian of the tool frame: linear rows first, then angular.
Matrix67d tool_jacobian(const Vector7d& q, const ArmModel& model);

// Swivel angle of the elbow about the shoulder-wrist line, measured from the
// plane holding that line and cfg.vertical (elbow on the vertical side is 0),
// and its Jacobian by central differences. Throws Error(kDegenerateAxis).
std::pair<double, RowVector7d> arm_angle(const Vector7d& q, const ArmModel& model,
                                         const ArmIKConfig& cfg);
double arm_angle_value(const Vector7d& q, const ArmModel& model, const ArmIKConfig& cfg);

struct VelocityBounds {
  Vector7d lower;
  Vector7d upper;
};

VelocityBounds velocity_bounds(const Vector7d& q, const ArmModel& model, const ArmIKConfig& cfg);

// Twist (position error, rotation-vector error) taking `current` to `target`,
// both in the base frame.
Vector6d pose_error(const Eigen::Isometry3d& current, const Eigen::Isometry3d& target);

struct ArmQpResult {
  Vector7d q_dot;
  int iterations = 0;
};

// Box-constrained strictly convex QP of the tick, solved by a primal
// active-set method.
ArmQpResult solve_arm_qp(const Matrix67d& jacobian, const Vector6d& dx, const RowVector7d& angle_jacobian,
                         double d_alpha, const ArmState& state, const VelocityBounds& bounds,
                         const ArmIKConfig& cfg);

// Generic form: min 0.5 x'Hx - b'x on lower <= x <= upper, H positive definite.
ArmQpResult solve_box_qp(const Matrix7d& h, const Vector7d& b, const Vector7d& lower,
                         const Vector7d& upper);

// Objective data (H, b) of the tick QP in the 0.5 x'Hx - b'x form.
std::pair<Matrix7d, Vector7d> arm_qp_terms(const Matrix67d& jacobian, const Vector6d& dx,
                                           const RowVector7d& angle_jacobian, double d_alpha,
                                           const ArmState& state, const ArmIKConfig& cfg);

ArmState integrate(const ArmState& state, const Vector7d& q_dot, double dt);

// One full tick: pose error to `target`, arm-angle regulation toward 0,
// bounds, QP, integration.
struct ArmStepResult {
  ArmState state;
  Vector7d q_dot;
  Vector6d pose_error;
};
ArmStepResult arm_step(const ArmState& state, const Eigen::Isometry3d& target, const ArmModel& model,
                       const ArmIKConfig& cfg);

}  // namespace dexkin
