#pragma once

// Construction of a self-consistent reference hand.
//
// No published link dimensions exist for this mechanism, so the reference
// hand is built from chosen rest-pose anchor points. Every link length is then
// back-solved so that all residuals vanish at q = 0, d = 0, and the lead-screw
// travel is set from the actuator displacements reached over the static joint
// box (plus a margin). See docs/geometry.md.

#include "dexkin/hand.hpp"

namespace dexkin {

struct FingerDesign {
  Vector3d mcp_origin_O{0.030, 0.0, 0.0};
  Vector3d b1_Pmcp{0.004, 0.007, 0.007};
  Vector3d b2_Pmcp{0.004, 0.007, -0.007};
  // Rest distance from each lead-screw end to its ball joint, along the axis.
  std::array<double, 2> pss_length{0.034, 0.034};
  std::array<Vector3d, 3> actuator_axis{Vector3d::UnitX(), Vector3d::UnitX(), Vector3d::UnitX()};

  Vector3d crank_pivot_Pmcp{0.004, -0.002, 0.0};
  double psu_arm = 0.006;        // |P3 P22|
  double psu_arm_angle = 70.0;   // deg, in the P3 frame at alpha = 0
  double psu_length = 0.0;       // rest |P1 P22|; 0 places P10 in the plane x = 0 of O
  double psu_split = 0.78;       // |P1 P21| / |P1 P22| at rest

  double crank_arm = 0.008;      // |P3 P4|
  double crank_arm_angle = 100.0;
  Vector3d pip_origin_Pmcp{0.045, 0.0, 0.0};
  double pip_arm = 0.004;        // |Ppip P5|
  double pip_arm_angle = -140.0;

  double dip_anchor_arm = 0.005;  // |Ppip P6|
  double dip_anchor_angle = 105.0;
  Vector3d dip_origin_Ppip{0.025, 0.0, 0.0};
  double dip_arm = 0.006;         // |Pdip P7|
  double dip_arm_angle = -135.0;

  Vector3d tip_Pdip{0.018, 0.0, 0.0};

  JointLimit q1_limit{-0.35, 0.35};
  JointLimit q2_limit{-0.17, 1.5707963267948966};
  JointLimit q3_limit{0.0, 1.5707963267948966};
  double travel_margin = 0.0005;
};

FingerGeometry build_finger_geometry(const FingerDesign& design);

// Index/middle/ring/pinky designs and the thumb design of the reference hand.
FingerDesign reference_finger_design(int digit);

HandGeometry make_reference_hand();

}  // namespace dexkin
