#include "dexkin/reference_geometry.hpp"

#include "dexkin/error.hpp"

#include <cmath>
#include <numbers>

namespace dexkin {

namespace {

Vector3d polar(double radius, double degrees) {
  const double t = degrees * std::numbers::pi / 180.0;
  return {radius * std::cos(t), radius * std::sin(t), 0.0};
}

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

FingerGeometry build_finger_geometry(const FingerDesign& design) {
  FingerGeometry g;
  g.mcp_origin_O = design.mcp_origin_O;
  g.b1_Pmcp = design.b1_Pmcp;
  g.b2_Pmcp = design.b2_Pmcp;
  g.actuator_axis = design.actuator_axis;
  for (auto& axis : g.actuator_axis) axis.normalize();

  g.a1_rest_O = g.mcp_origin_O + g.b1_Pmcp - design.pss_length[0] * g.actuator_axis[0];
  g.a2_rest_O = g.mcp_origin_O + g.b2_Pmcp - design.pss_length[1] * g.actuator_axis[1];
  g.l1 = (g.mcp_origin_O + g.b1_Pmcp - g.a1_rest_O).norm();
  g.l2 = (g.mcp_origin_O + g.b2_Pmcp - g.a2_rest_O).norm();

  g.crank_pivot_Pmcp = design.crank_pivot_Pmcp;
  g.psu_anchor_P3 = polar(design.psu_arm, design.psu_arm_angle);
  const Vector3d p22_rest = g.mcp_origin_O + g.crank_pivot_Pmcp + g.psu_anchor_P3;
  const double psu_length =
      design.psu_length > 0.0 ? design.psu_length : p22_rest.dot(g.actuator_axis[2]);
  g.p1_rest_O = p22_rest - psu_length * g.actuator_axis[2];
  g.psu_proximal = design.psu_split * psu_length;
  g.psu_distal = psu_length - g.psu_proximal;

  g.crank_coupler_P3 = polar(design.crank_arm, design.crank_arm_angle);
  g.pip_origin_Pmcp = design.pip_origin_Pmcp;
  g.pip_coupler_Ppip = polar(design.pip_arm, design.pip_arm_angle);
  g.pip_link = (g.pip_origin_Pmcp + g.pip_coupler_Ppip - g.crank_pivot_Pmcp - g.crank_coupler_P3).norm();

  g.dip_anchor_Pmcp = polar(design.dip_anchor_arm, design.dip_anchor_angle);
  g.dip_origin_Ppip = design.dip_origin_Ppip;
  g.dip_coupler_Pdip = polar(design.dip_arm, design.dip_arm_angle);
  g.dip_link = (g.dip_anchor_Pmcp - g.dip_origin_Ppip - g.dip_coupler_Pdip).norm();

  g.tip_Pdip = design.tip_Pdip;

  g.q_limits[0] = design.q1_limit;
  g.q_limits[1] = design.q2_limit;
  g.q_limits[2] = design.q3_limit;
  g.q_limits[3] = {solve_dip(design.q3_limit.lower, g), solve_dip(design.q3_limit.upper, g)};

  // Travel: the actuator envelope of the static joint box, swept with warm
  // starts so that every solve stays on the rest branch.
  g.d_min = Vector3d::Constant(-1.0);
  g.d_max = Vector3d::Constant(1.0);
  Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
  Vector3d hi = -lo;
  constexpr int kSteps = 12;
  auto lerp = [](const JointLimit& l, int i) { return l.lower + (l.upper - l.lower) * i / kSteps; };
  std::optional<ActuatorState> warm;
  for (int i = 0; i <= kSteps; ++i) {
    for (int j = 0; j <= kSteps; ++j) {
      for (int k = 0; k <= kSteps; ++k) {
        FingerJointState q{lerp(g.q_limits[0], i), lerp(g.q_limits[1], j), lerp(g.q_limits[2], k), 0};
        const ActuatorState d = finger_ik(q, g, warm);
        warm = d;
        lo = lo.cwiseMin(d.vector());
        hi = hi.cwiseMax(d.vector());
      }
    }
  }
  g.d_min = lo - Vector3d::Constant(design.travel_margin);
  g.d_max = hi + Vector3d::Constant(design.travel_margin);

  g.validate();
  return g;
}

FingerDesign reference_finger_design(int digit) {
  FingerDesign d;
  switch (static_cast<Digit>(digit)) {
    case Digit::kThumb:
      // Abduction chain retracts along x; flexion and PIP chains along y so
      // that both stay well conditioned over the full abduction span.
      d.mcp_origin_O = {0.020, 0.0, 0.0};
      d.b1_Pmcp = 0.008 * Vector3d(std::sin(deg(-30.0)), 0.0, std::cos(deg(-30.0)));
      d.b2_Pmcp = polar(0.008, -45.0);
      d.pss_length = {0.025, 0.025};
      d.actuator_axis = {Vector3d::UnitX(), Vector3d::UnitY(), Vector3d::UnitY()};
      d.psu_arm_angle = -15.0;
      d.psu_length = 0.038;
      d.psu_split = 0.030 / 0.038;
      d.pip_origin_Pmcp = {0.038, 0.0, 0.0};
      d.dip_origin_Ppip = {0.022, 0.0, 0.0};
      d.tip_Pdip = {0.018, 0.0, 0.0};
      d.q1_limit = {deg(-4.0), deg(90.0)};
      d.q2_limit = {-0.17, 1.4};
      break;
    case Digit::kPinky:
      d.pip_origin_Pmcp = {0.038, 0.0, 0.0};
      d.dip_origin_Ppip = {0.021, 0.0, 0.0};
      d.tip_Pdip = {0.016, 0.0, 0.0};
      break;
    case Digit::kIndex:
    case Digit::kMiddle:
    case Digit::kRing:
      break;
    default:
      throw Error(ErrorCode::kInvalidArgument, "digit index out of range");
  }
  return d;
}

HandGeometry make_reference_hand() {
  HandGeometry h;
  for (int i = 0; i < kDigitCount; ++i) h.digits[i] = build_finger_geometry(reference_finger_design(i));

  auto mount = [](const Eigen::Matrix3d& r, const Vector3d& t) {
    Eigen::Isometry3d m = Eigen::Isometry3d::Identity();
    m.linear() = r;
    m.translation() = t;
    return m;
  };
  h.mounts[0] = mount(rot_y(deg(-40.0)), {0.020, 0.015, 0.035});
  h.mounts[1] = mount(Eigen::Matrix3d::Identity(), {0.070, 0.0, 0.033});
  h.mounts[2] = mount(Eigen::Matrix3d::Identity(), {0.075, 0.0, 0.011});
  h.mounts[3] = mount(Eigen::Matrix3d::Identity(), {0.070, 0.0, -0.011});
  h.mounts[4] = mount(Eigen::Matrix3d::Identity(), {0.060, 0.0, -0.033});

  for (int i = 1; i < kDigitCount; ++i) {
    const auto& lim = h.digits[i].q_limits;
    h.coupled_limits[i] = {true, lim[0].upper, lim[1].upper};
  }
  h.palm_keypoints = {{"wrist", Vector3d::Zero()}, {"palm_center", Vector3d(0.055, 0.0, 0.0)}};
  h.validate();
  return h;
}

}  // namespace dexkin
