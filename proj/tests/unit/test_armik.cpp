#include "dexkin/armik.hpp"
#include "dexkin/error.hpp"

#include "arm_oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dexkin;

namespace {

Vector7d random_q(std::mt19937_64& rng, const ArmModel& m, double inset = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector7d q;
  for (int i = 0; i < kArmJoints; ++i) {
    const double lo = m.q_lower[i] + inset, hi = m.q_upper[i] - inset;
    q[i] = lo + (hi - lo) * u(rng);
  }
  return q;
}

}  // namespace

TEST_CASE("arm FK matches an independent modified-DH chain") {
  const ArmModel m = reference_arm();
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const Vector7d q = random_q(rng, m);
    const Eigen::Isometry3d a = arm_fk(q, m), b = arm_oracle::tool(q, m);
    CHECK((a.matrix() - b.matrix()).cwiseAbs().maxCoeff() <= 1e-14);
    const ArmKinematics kin = arm_kinematics(q, m);
    for (int i = 0; i < kArmJoints; ++i) {
      const Eigen::Isometry3d f = arm_oracle::chain(q, m, i + 1);
      CHECK((kin.origin[i] - f.translation()).norm() <= 1e-14);
      CHECK((kin.axis[i] - f.linear().col(2)).norm() <= 1e-14);
    }
  }
  // Home pose of the reference arm: flange above the base, tool pointing down.
  const Eigen::Isometry3d home = arm_fk(reference_arm_home(), m);
  CHECK(home.linear().col(2).z() == doctest::Approx(-1.0));
}

TEST_CASE("tool Jacobian matches central differences") {
  const ArmModel m = reference_arm();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Vector7d q = random_q(rng, m);
    worst = std::max(worst, (tool_jacobian(q, m) - arm_oracle::numeric_tool_jacobian(q, m)).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("arm angle agrees with a rotated-frame azimuth and its derivative") {
  const ArmModel m = reference_arm();
  const ArmIKConfig cfg;
  std::mt19937_64 rng(3);
  double worst_value = 0.0, worst_jac = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Vector7d q = random_q(rng, m, 0.3);
    const auto [psi, jac] = arm_angle(q, m, cfg);
    worst_value = std::max(worst_value, std::abs(std::remainder(psi - arm_oracle::swivel(q, m, cfg.vertical), 2 * M_PI)));
    for (int i = 0; i < kArmJoints; ++i) {
      Vector7d qp = q, qm = q;
      qp[i] += 1e-5;
      qm[i] -= 1e-5;
      const double fd = std::remainder(arm_oracle::swivel(qp, m, cfg.vertical) - arm_oracle::swivel(qm, m, cfg.vertical),
                                       2 * M_PI) / 2e-5;
      worst_jac = std::max(worst_jac, std::abs(fd - jac[i]));
    }
  }
  CHECK(worst_value <= 1e-12);
  CHECK(worst_jac <= 1e-5);
}

TEST_CASE("a straight arm has no swivel angle") {
  const ArmModel m = reference_arm();
  Vector7d q = Vector7d::Zero();
  // Elbow joint at zero puts the elbow offset aside; a stretched configuration
  // aligns shoulder, elbow and wrist only when the offsets cancel, so use a
  // model without them.
  ArmModel straight = m;
  straight.a = {0, 0, 0, 0, 0, 0, 0};
  q[3] = 0.0;
  CHECK_THROWS_AS(arm_angle_value(q, straight, ArmIKConfig{}), Error);
}

TEST_CASE("pose error is a twist that FK can undo") {
  const ArmModel m = reference_arm();
  std::mt19937_64 rng(4);
  const Vector7d q = random_q(rng, m);
  const Eigen::Isometry3d cur = arm_fk(q, m);
  Eigen::Isometry3d tgt = cur;
  tgt.pretranslate(Eigen::Vector3d(0.01, -0.02, 0.03));
  tgt.linear() = Eigen::AngleAxisd(0.2, Eigen::Vector3d(1, 1, 0).normalized()).toRotationMatrix() * cur.linear();
  const Vector6d e = pose_error(cur, tgt);
  CHECK((e.head<3>() - Eigen::Vector3d(0.01, -0.02, 0.03)).norm() <= 1e-15);
  CHECK((e.tail<3>() - 0.2 * Eigen::Vector3d(1, 1, 0).normalized()).norm() <= 1e-14);
  CHECK(pose_error(cur, cur).norm() <= 1e-15);
}

TEST_CASE("velocity bounds keep integrated joints inside their limits") {
  const ArmModel m = reference_arm();
  const ArmIKConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vector7d q = random_q(rng, m, 0.0);
    const VelocityBounds vb = velocity_bounds(q, m, cfg);
    for (int i = 0; i < kArmJoints; ++i) {
      REQUIRE(vb.lower[i] <= vb.upper[i]);
      CHECK(vb.upper[i] <= m.velocity_limit[i]);
      CHECK(vb.lower[i] >= -m.velocity_limit[i]);
      for (double v : {vb.lower[i], vb.upper[i]}) {
        const double next = q[i] + v * cfg.dt;
        CHECK(next <= std::max(q[i], m.q_upper[i]) + 1e-12);
        CHECK(next >= std::min(q[i], m.q_lower[i]) - 1e-12);
      }
    }
  }
}

TEST_CASE("box QP: feasible and first-order optimal on random instances") {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int k = 0; k < 5000; ++k) {
    const auto p = arm_oracle::random_box_qp(rng);
    const Vector7d x = solve_box_qp(p.h, p.b, p.lo, p.hi).q_dot;
    for (int i = 0; i < kArmJoints; ++i) {
      REQUIRE(x[i] >= p.lo[i]);
      REQUIRE(x[i] <= p.hi[i]);
    }
    worst = std::max(worst, arm_oracle::kkt_residual(p.h, p.b, p.lo, p.hi, x));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("box QP agrees with exhaustive active-set enumeration") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 30; ++k) {
    const auto p = arm_oracle::random_box_qp(rng);
    const Vector7d x = solve_box_qp(p.h, p.b, p.lo, p.hi).q_dot;
    CHECK((x - arm_oracle::enumerate(p.h, p.b, p.lo, p.hi)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("box QP with saturated bounds matches a zooming grid search") {
  std::mt19937_64 rng(8);
  int saturated = 0;
  for (int k = 0; k < 5; ++k) {
    const auto p = arm_oracle::random_box_qp(rng, 10.0);
    const Vector7d x = solve_box_qp(p.h, p.b, p.lo, p.hi).q_dot;
    for (int i = 0; i < kArmJoints; ++i) saturated += x[i] == p.lo[i] || x[i] == p.hi[i];
    CHECK((x - arm_oracle::grid_refine(p.h, p.b, p.lo, p.hi)).cwiseAbs().maxCoeff() <= 1e-6);
  }
  CHECK(saturated >= 5);
}

TEST_CASE("zero error, zero previous velocity: zero command") {
  const ArmModel m = reference_arm();
  const ArmIKConfig cfg;
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    ArmState s;
    s.q = random_q(rng, m, 0.2);
    const Vector7d qd = solve_arm_qp(tool_jacobian(s.q, m), Vector6d::Zero(), RowVector7d::Zero(), 0.0, s,
                                     velocity_bounds(s.q, m, cfg), cfg)
                            .q_dot;
    CHECK(qd.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("tick QP matches the enumeration oracle when a far target saturates joints") {
  const ArmModel m = reference_arm();
  const ArmIKConfig cfg;
  ArmState s;
  s.q = reference_arm_home();
  Eigen::Isometry3d target = arm_fk(s.q, m);
  target.pretranslate(Eigen::Vector3d(0.3, 0.2, -0.2));
  const Vector6d dx = pose_error(arm_fk(s.q, m), target) / cfg.dt;
  const auto [psi, ja] = arm_angle(s.q, m, cfg);
  const VelocityBounds vb = velocity_bounds(s.q, m, cfg);
  const Vector7d x = solve_arm_qp(tool_jacobian(s.q, m), dx, ja, -psi / cfg.dt, s, vb, cfg).q_dot;
  const auto [h, b] = arm_qp_terms(tool_jacobian(s.q, m), dx, ja, -psi / cfg.dt, s, cfg);
  int saturated = 0;
  for (int i = 0; i < kArmJoints; ++i) saturated += x[i] == vb.lower[i] || x[i] == vb.upper[i];
  CHECK(saturated >= 1);
  CHECK((x - arm_oracle::enumerate(h, b, vb.lower, vb.upper)).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(arm_oracle::kkt_residual(h, b, vb.lower, vb.upper, x) <= 1e-8);
}

TEST_CASE("repeated ticks drive the tool onto a reachable target") {
  const ArmModel m = reference_arm();
  const ArmIKConfig cfg;
  std::mt19937_64 rng(10);
  for (int k = 0; k < 5; ++k) {
    ArmState s;
    s.q = reference_arm_home();
    Vector7d goal = s.q;
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < kArmJoints; ++i) goal[i] += u(rng);
    const Eigen::Isometry3d target = arm_fk(goal, m);
    ArmStepResult step;
    for (int t = 0; t < 500; ++t) {
      step = arm_step(s, target, m, cfg);
      s = step.state;
      for (int i = 0; i < kArmJoints; ++i) {
        REQUIRE(s.q[i] <= m.q_upper[i]);
        REQUIRE(s.q[i] >= m.q_lower[i]);
      }
    }
    CHECK(pose_error(arm_fk(s.q, m), target).norm() <= 1e-4);
  }
}

TEST_CASE("invalid arm settings are rejected") {
  ArmModel m = reference_arm();
  m.q_lower[2] = m.q_upper[2] + 0.1;
  CHECK_THROWS_AS(m.validate(), Error);
  ArmIKConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = ArmIKConfig{};
  cfg.w2 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
