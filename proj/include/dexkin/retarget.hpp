#pragma once

// Keyvector retargeting: human glove landmarks -> robot joint commands.
//
// Each keyvector joins two named keypoints. The robot side uses the hand
// keypoint labels ("index_tip", "pinky_dip", ...); the human side resolves the
// same label through RetargetConfig::human_labels into one of the 25 glove
// landmarks. Per frame the solver minimizes
//
//   sum_i w(d_i) |r_i(q) - f(d_i) v_i / d_i|^2 + lambda |q - q_prev|^2
//
// over the box q_lower <= q <= q_upper, where v_i is the human keyvector,
// d_i = |v_i| and r_i(q) the robot keyvector.
//
// The decision vector holds (q1, q2, q3) per digit, 15 entries. q4 follows q3
// through the DIP constraint, so its derivative enters the q3 column through
// dq4/dq3. The smoothness term covers all 20 joints.

#include "dexkin/hand.hpp"

#include <Eigen/Geometry>

#include <array>
#include <map>
#include <string>
#include <string_view>

namespace dexkin {

inline constexpr int kLandmarkCount = 25;
inline constexpr int kKeyvectorCount = 15;
inline constexpr int kRetargetVariables = 3 * kDigitCount;
inline constexpr int kRetargetRows = 3 * kKeyvectorCount + kHandJointCount;

// Landmark order of a glove frame: 0 wrist, thumb 1..4 (cmc, mcp, ip, tip),
// then for index, middle, ring, pinky: metacarpal, mcp, pip, dip, tip.
const std::array<std::string, kLandmarkCount>& landmark_labels();
// Returns -1 when unknown.
int landmark_index(std::string_view label);

struct Landmark {
  Vector3d position = Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

struct HumanHandFrame {
  double timestamp = 0.0;
  std::array<Landmark, kLandmarkCount> landmarks{};
};

enum class Membership { kNone, kS1, kS2 };

const char* to_string(Membership m);

struct Keyvector {
  std::string from;
  std::string to;
  Membership membership = Membership::kNone;
  Vector3d beta = Vector3d::Ones();
};

using KeyvectorSpec = std::array<Keyvector, kKeyvectorCount>;

// 5 MCP -> tip, 4 finger tip -> thumb tip (S1), 6 among the index, middle and
// ring PIPs and the pinky DIP (S2).
KeyvectorSpec default_keyvector_spec();

// Throws Error(kConfigError) on duplicate pairs or unresolvable labels.
void validate_keyvector_spec(const KeyvectorSpec& spec, const std::map<std::string, std::string>& human_labels);

struct RetargetConfig {
  double epsilon = 0.02;       // m
  double eta1 = 0.004;         // m, S1 closing distance
  double eta2 = 0.02;          // m, S2 separation distance
  double lambda_smooth = 1e-5;
  double weight_s1 = 200.0;
  double weight_s2 = 400.0;
  HandVector q_lower = HandVector::Zero();
  HandVector q_upper = HandVector::Zero();
  kincore::SolverSettings solver;
  // Rotation and translation taking glove base coordinates to the hand base.
  Eigen::Isometry3d glove_to_hand = Eigen::Isometry3d::Identity();
  // Robot keypoint label -> glove landmark label.
  std::map<std::string, std::string> human_labels;

  void validate() const;
};

// Fingers map one to one; the robot thumb (mcp, pip, dip, tip) maps to the
// human thumb (cmc, mcp, ip, tip).
std::map<std::string, std::string> default_human_labels();

// Defaults with the joint box taken from the hand's static limits.
RetargetConfig default_retarget_config(const HandGeometry& g);

double weight(double d, Membership m, const RetargetConfig& cfg);
// Target magnitude f(d) for an isotropic scale beta.
double target_length(double d, Membership m, double beta, const RetargetConfig& cfg);
// Target vector f(d_i) * unit(beta o v), with f = |beta o v| above epsilon.
Vector3d target_vector(const Vector3d& v, Membership m, const Vector3d& beta,
                       const RetargetConfig& cfg);

// Human keyvectors in the hand base frame. Throws Error(kMissingLandmark).
std::array<Vector3d, kKeyvectorCount> extract_keyvectors(const HumanHandFrame& frame,
                                                         const KeyvectorSpec& spec,
                                                         const RetargetConfig& cfg);

// Robot keyvectors for a keypoint set.
std::array<Vector3d, kKeyvectorCount> robot_keyvectors(const KeypointSet& k, const KeyvectorSpec& spec);

// Per-keyvector weights and target vectors for one frame.
struct RetargetTargets {
  std::array<double, kKeyvectorCount> weights{};
  std::array<Vector3d, kKeyvectorCount> targets{};
};

RetargetTargets build_targets(const HumanHandFrame& frame, const KeyvectorSpec& spec,
                              const RetargetConfig& cfg);

struct RetargetState {
  HandJointState q_prev;
  bool initialized = false;
};

using RetargetVector = Eigen::Matrix<double, kRetargetVariables, 1>;
using RetargetResidual = Eigen::Matrix<double, kRetargetRows, 1>;
using RetargetJacobian = Eigen::Matrix<double, kRetargetRows, kRetargetVariables>;

RetargetVector to_decision(const HandJointState& q);
// q4 of every digit recomputed from q3.
HandJointState from_decision(const RetargetVector& x, const HandGeometry& g);

// Stacked residual (45 keyvector rows, then 20 smoothness rows) and its
// Jacobian with respect to the decision vector. With include_dip_chain_rule
// false the dq4/dq3 contribution is dropped (used as a negative control).
void residuals_and_jacobian(const RetargetVector& x, const RetargetTargets& targets,
                            const KeyvectorSpec& spec, const RetargetConfig& cfg,
                            const HandJointState& q_prev, const HandGeometry& g,
                            RetargetResidual& r, RetargetJacobian* jac,
                            bool include_dip_chain_rule = true);

struct RetargetStepResult {
  HandJointState q;
  kincore::SolveStatus status = kincore::SolveStatus::kConverged;
  int iterations = 0;
  bool held = false;  // previous command repeated
};

// One solve warm-started at state.q_prev. The result is passed through
// clamp_command. On a failed solve the previous command is returned, flagged
// held, and the state is left unchanged.
RetargetStepResult retarget_step(const HumanHandFrame& frame, const KeyvectorSpec& spec,
                                 const RetargetConfig& cfg, RetargetState& state,
                                 const HandGeometry& g);

// Glove frame whose mapped landmarks sit at `scale` times the robot keypoints
// of q (through glove_to_hand). Unmapped landmarks: the wrist at the origin,
// each metacarpal at its digit's mount. Orientations are identity.
HumanHandFrame synthesize_frame(const HandJointState& q, const HandGeometry& g, const RetargetConfig& cfg,
                                double scale = 1.0, double timestamp = 0.0);

// beta_i = |robot keyvector at q = 0| / |human keyvector| (isotropic), from a
// frame of the operator's open hand.
void calibrate_betas(const HumanHandFrame& open_hand, KeyvectorSpec& spec, const RetargetConfig& cfg,
                     const HandGeometry& g);

}  // namespace dexkin
