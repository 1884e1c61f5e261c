#include "dexkin/armik.hpp"

#include "dexkin/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dexkin {

namespace {

using Eigen::Isometry3d;
using Eigen::Matrix3d;
using Eigen::Vector3d;

constexpr double kAngleStep = 1e-6;
constexpr double kAxisTolerance = 1e-6;  // m
constexpr int kQpIterationCap = 100;

Isometry3d dh_transform(double a, double d, double alpha, double theta) {
  Isometry3d t = Isometry3d::Identity();
  t.rotate(Eigen::AngleAxisd(alpha, Vector3d::UnitX()));
  t.translate(Vector3d(a, 0.0, 0.0));
  t.rotate(Eigen::AngleAxisd(theta, Vector3d::UnitZ()));
  t.translate(Vector3d(0.0, 0.0, d));
  return t;
}

}  // namespace

void ArmModel::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "arm model: " + what); };
  if ((q_lower.array() >= q_upper.array()).any()) fail("joint limits must satisfy lower < upper");
  if (!(velocity_limit.array() > 0.0).all()) fail("velocity limits must be positive");
  for (int j : {shoulder_joint, elbow_joint, wrist_joint}) {
    if (j < 0 || j >= kArmJoints) fail("shoulder/elbow/wrist joint index out of range");
  }
  const Matrix3d r = tool.linear();
  if ((r.transpose() * r - Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    fail("tool offset is not a rigid transform");
  }
}

void ArmIKConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "arm ik: " + what); };
  if (!(w0.array() >= 0.0).all() || !(w1 >= 0.0) || !(w2 >= 0.0) || !(w3 >= 0.0)) {
    fail("weights must be non-negative");
  }
  if (!(w2 + w3 > 0.0)) fail("w2 + w3 must be positive for a strictly convex problem");
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(velocity_damper_margin >= 0.0)) fail("damper margin must be non-negative");
  if (!(damper_gain > 0.0 && damper_gain <= 1.0)) fail("damper gain must lie in (0, 1]");
  if (!(vertical.norm() > 0.0)) fail("vertical direction must be non-zero");
}

ArmModel reference_arm() {
  constexpr double h = std::numbers::pi / 2.0;
  ArmModel m;
  m.a = {0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088};
  m.d = {0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0};
  m.alpha = {0.0, -h, h, h, -h, h, h};
  m.q_lower << -2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973;
  m.q_upper << 2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973;
  m.velocity_limit << 2.175, 2.175, 2.175, 2.175, 2.61, 2.61, 2.61;
  m.tool = Isometry3d::Identity();
  m.tool.translate(Vector3d(0.0, 0.0, 0.107));
  return m;
}

Vector7d reference_arm_home() {
  constexpr double pi = std::numbers::pi;
  Vector7d q;
  q << 0.0, -pi / 4.0, 0.0, -3.0 * pi / 4.0, 0.0, pi / 2.0, pi / 4.0;
  return q;
}

ArmKinematics arm_kinematics(const Vector7d& q, const ArmModel& model) {
  ArmKinematics k;
  Isometry3d t = Isometry3d::Identity();
  for (int i = 0; i < kArmJoints; ++i) {
    t = t * dh_transform(model.a[i], model.d[i], model.alpha[i], q[i]);
    k.origin[i] = t.translation();
    k.axis[i] = t.linear().col(2);
  }
  k.tool = t * model.tool;
  return k;
}

Isometry3d arm_fk(const Vector7d& q, const ArmModel& model) { return arm_kinematics(q, model).tool; }

Matrix67d tool_jacobian(const Vector7d& q, const ArmModel& model) {
  const ArmKinematics k = arm_kinematics(q, model);
  const Vector3d p = k.tool.translation();
  Matrix67d j;
  for (int i = 0; i < kArmJoints; ++i) {
    j.block<3, 1>(0, i) = k.axis[i].cross(p - k.origin[i]);
    j.block<3, 1>(3, i) = k.axis[i];
  }
  return j;
}

double arm_angle_value(const Vector7d& q, const ArmModel& model, const ArmIKConfig& cfg) {
  const ArmKinematics k = arm_kinematics(q, model);
  const Vector3d s = k.origin[model.shoulder_joint];
  const Vector3d e = k.origin[model.elbow_joint];
  const Vector3d w = k.origin[model.wrist_joint];
  const Vector3d sw = w - s;
  if (sw.norm() < kAxisTolerance) {
    throw Error(ErrorCode::kDegenerateAxis, "shoulder and wrist centres coincide");
  }
  const Vector3d u = sw.normalized();
  const Vector3d up = cfg.vertical.normalized();
  const Vector3d ref = up - up.dot(u) * u;
  if (ref.norm() < kAxisTolerance) {
    throw Error(ErrorCode::kDegenerateAxis, "shoulder-wrist line is parallel to the vertical");
  }
  const Vector3d se = e - s;
  const Vector3d perp = se - se.dot(u) * u;
  if (perp.norm() < kAxisTolerance) {
    throw Error(ErrorCode::kDegenerateAxis, "elbow lies on the shoulder-wrist line");
  }
  const Vector3d n = ref.normalized();
  return std::atan2(u.dot(n.cross(perp)), n.dot(perp));
}

std::pair<double, RowVector7d> arm_angle(const Vector7d& q, const ArmModel& model,
                                         const ArmIKConfig& cfg) {
  const double psi = arm_angle_value(q, model, cfg);
  RowVector7d jac;
  for (int i = 0; i < kArmJoints; ++i) {
    Vector7d qp = q, qm = q;
    qp[i] += kAngleStep;
    qm[i] -= kAngleStep;
    double diff = arm_angle_value(qp, model, cfg) - arm_angle_value(qm, model, cfg);
    diff = std::remainder(diff, 2.0 * std::numbers::pi);
    jac[i] = diff / (2.0 * kAngleStep);
  }
  return {psi, jac};
}

VelocityBounds velocity_bounds(const Vector7d& q, const ArmModel& model, const ArmIKConfig& cfg) {
  VelocityBounds b;
  const double k = cfg.damper_gain / cfg.dt;
  const double m = cfg.velocity_damper_margin;
  for (int i = 0; i < kArmJoints; ++i) {
    const double v = model.velocity_limit[i];
    b.upper[i] = std::clamp(k * (model.q_upper[i] - q[i] - m), -v, v);
    b.lower[i] = std::clamp(k * (model.q_lower[i] - q[i] + m), -v, v);
    // Outside the damper band the two bounds can cross; keep the box non-empty
    // by letting the bound that pulls back toward the interior win.
    if (b.lower[i] > b.upper[i]) {
      if (q[i] > 0.5 * (model.q_lower[i] + model.q_upper[i])) {
        b.lower[i] = b.upper[i];
      } else {
        b.upper[i] = b.lower[i];
      }
    }
  }
  return b;
}

Vector6d pose_error(const Isometry3d& current, const Isometry3d& target) {
  Vector6d e;
  e.head<3>() = target.translation() - current.translation();
  const Eigen::AngleAxisd aa(Matrix3d(target.linear() * current.linear().transpose()));
  e.tail<3>() = aa.angle() * aa.axis();
  return e;
}

ArmQpResult solve_box_qp(const Matrix7d& h, const Vector7d& b, const Vector7d& lower,
                         const Vector7d& upper) {
  enum class Bound { kFree, kLower, kUpper };
  std::array<Bound, kArmJoints> set{};

  // Feasible start: the clipped unconstrained minimizer.
  Vector7d x = h.llt().solve(b).cwiseMax(lower).cwiseMin(upper);
  for (int i = 0; i < kArmJoints; ++i) {
    if (x[i] == lower[i]) set[i] = Bound::kLower;
    else if (x[i] == upper[i]) set[i] = Bound::kUpper;
  }

  ArmQpResult out;
  for (out.iterations = 1; out.iterations <= kQpIterationCap; ++out.iterations) {
    std::array<int, kArmJoints> free{};
    int nf = 0;
    for (int i = 0; i < kArmJoints; ++i)
      if (set[i] == Bound::kFree) free[nf++] = i;

    Vector7d candidate = x;
    if (nf > 0) {
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs[a] = b[free[a]];
        for (int j = 0; j < kArmJoints; ++j)
          if (set[j] != Bound::kFree) rhs[a] -= h(free[a], j) * x[j];
        for (int c = 0; c < nf; ++c) hf(a, c) = h(free[a], free[c]);
      }
      const Eigen::VectorXd sol = hf.llt().solve(rhs);
      for (int a = 0; a < nf; ++a) candidate[free[a]] = sol[a];
    }

    // Longest feasible move toward the candidate.
    double step = 1.0;
    int blocking = -1;
    Bound blocking_side = Bound::kFree;
    for (int a = 0; a < nf; ++a) {
      const int i = free[a];
      const double delta = candidate[i] - x[i];
      if (delta > 0.0 && candidate[i] > upper[i]) {
        const double t = (upper[i] - x[i]) / delta;
        if (t < step) { step = t; blocking = i; blocking_side = Bound::kUpper; }
      } else if (delta < 0.0 && candidate[i] < lower[i]) {
        const double t = (lower[i] - x[i]) / delta;
        if (t < step) { step = t; blocking = i; blocking_side = Bound::kLower; }
      }
    }
    if (blocking >= 0) {
      for (int a = 0; a < nf; ++a) x[free[a]] += step * (candidate[free[a]] - x[free[a]]);
      x[blocking] = blocking_side == Bound::kUpper ? upper[blocking] : lower[blocking];
      set[blocking] = blocking_side;
      continue;
    }
    x = candidate;

    // Multipliers of the active bounds: gradient must point out of the box.
    const Vector7d g = h * x - b;
    int release = -1;
    double worst = 0.0;
    for (int i = 0; i < kArmJoints; ++i) {
      const double v = set[i] == Bound::kLower ? -g[i] : (set[i] == Bound::kUpper ? g[i] : 0.0);
      if (v > worst) {
        worst = v;
        release = i;
      }
    }
    if (release < 0) break;
    set[release] = Bound::kFree;
  }
  for (int i = 0; i < kArmJoints; ++i) {
    if (set[i] == Bound::kLower) x[i] = lower[i];
    if (set[i] == Bound::kUpper) x[i] = upper[i];
  }
  out.q_dot = x.cwiseMax(lower).cwiseMin(upper);
  return out;
}

std::pair<Matrix7d, Vector7d> arm_qp_terms(const Matrix67d& jacobian, const Vector6d& dx,
                                           const RowVector7d& angle_jacobian, double d_alpha,
                                           const ArmState& state, const ArmIKConfig& cfg) {
  const auto w0 = cfg.w0.asDiagonal();
  Matrix7d h = jacobian.transpose() * w0 * jacobian +
               cfg.w1 * angle_jacobian.transpose() * angle_jacobian +
               (cfg.w2 + cfg.w3) * Matrix7d::Identity();
  Vector7d b = jacobian.transpose() * (w0 * (cfg.lambda_scale * dx)) +
               cfg.w1 * angle_jacobian.transpose() * d_alpha + cfg.w3 * state.q_dot_prev;
  return {2.0 * h, 2.0 * b};
}

ArmQpResult solve_arm_qp(const Matrix67d& jacobian, const Vector6d& dx, const RowVector7d& angle_jacobian,
                         double d_alpha, const ArmState& state, const VelocityBounds& bounds,
                         const ArmIKConfig& cfg) {
  const auto [h, b] = arm_qp_terms(jacobian, dx, angle_jacobian, d_alpha, state, cfg);
  return solve_box_qp(h, b, bounds.lower, bounds.upper);
}

ArmState integrate(const ArmState& state, const Vector7d& q_dot, double dt) {
  ArmState next;
  next.q = state.q + q_dot * dt;
  next.q_dot_prev = q_dot;
  return next;
}

ArmStepResult arm_step(const ArmState& state, const Isometry3d& target, const ArmModel& model,
                       const ArmIKConfig& cfg) {
  ArmStepResult out;
  out.pose_error = pose_error(arm_fk(state.q, model), target);
  const auto [psi, ja] = arm_angle(state.q, model, cfg);
  const VelocityBounds bounds = velocity_bounds(state.q, model, cfg);
  out.q_dot = solve_arm_qp(tool_jacobian(state.q, model), out.pose_error / cfg.dt, ja, -psi / cfg.dt,
                           state, bounds, cfg)
                  .q_dot;
  out.state = integrate(state, out.q_dot, cfg.dt);
  return out;
}

}  // namespace dexkin
