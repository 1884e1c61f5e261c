#include "dexkin/retarget.hpp"

#include "dexkin/error.hpp"

#include <cmath>
#include <set>

namespace dexkin {

namespace {

constexpr double kDistanceFloor = 1e-6;  // m
constexpr double kColdSeedFlexion = 0.9;  // rad

const std::array<std::string, kLandmarkCount> kLandmarks = {
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_metacarpal", "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_metacarpal", "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_metacarpal", "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_metacarpal", "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
};

// A robot keypoint is either one of the 20 digit points or a fixed palm point.
struct RobotPoint {
  int digit = -1;
  int point = 0;
  Vector3d fixed = Vector3d::Zero();
};

RobotPoint resolve_robot(const std::string& label, const HandGeometry& g) {
  const int idx = KeypointSet::digit_label_index(label);
  if (idx >= 0) return {idx / 4, idx % 4, Vector3d::Zero()};
  for (const auto& [name, p] : g.palm_keypoints)
    if (name == label) return {-1, 0, p};
  throw Error(ErrorCode::kMissingLandmark, "unknown robot keypoint '" + label + "'");
}

int resolve_human(const std::string& robot_label, const RetargetConfig& cfg) {
  const auto it = cfg.human_labels.find(robot_label);
  const std::string& human = it == cfg.human_labels.end() ? robot_label : it->second;
  const int idx = landmark_index(human);
  if (idx < 0) {
    throw Error(ErrorCode::kMissingLandmark,
                "keypoint '" + robot_label + "' has no glove landmark ('" + human + "')");
  }
  return idx;
}

}  // namespace

const std::array<std::string, kLandmarkCount>& landmark_labels() { return kLandmarks; }

int landmark_index(std::string_view label) {
  for (int i = 0; i < kLandmarkCount; ++i)
    if (kLandmarks[i] == label) return i;
  return -1;
}

const char* to_string(Membership m) {
  switch (m) {
    case Membership::kNone: return "none";
    case Membership::kS1: return "S1";
    case Membership::kS2: return "S2";
  }
  return "?";
}

KeyvectorSpec default_keyvector_spec() {
  KeyvectorSpec s;
  int i = 0;
  for (int d = 0; d < kDigitCount; ++d) {
    s[i++] = {KeypointSet::digit_label(d, DigitPoint::kMcp),
              KeypointSet::digit_label(d, DigitPoint::kTip), Membership::kNone, Vector3d::Ones()};
  }
  for (int d = 1; d < kDigitCount; ++d) {
    s[i++] = {KeypointSet::digit_label(d, DigitPoint::kTip), "thumb_tip", Membership::kS1,
              Vector3d::Ones()};
  }
  const std::array<std::string, 4> inner = {"index_pip", "middle_pip", "ring_pip", "pinky_dip"};
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) s[i++] = {inner[a], inner[b], Membership::kS2, Vector3d::Ones()};
  return s;
}

void validate_keyvector_spec(const KeyvectorSpec& spec,
                             const std::map<std::string, std::string>& human_labels) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& kv : spec) {
    auto key = std::minmax(kv.from, kv.to);
    if (kv.from == kv.to || !seen.insert({key.first, key.second}).second) {
      throw Error(ErrorCode::kConfigError, "duplicate or degenerate keyvector " + kv.from + " -> " + kv.to);
    }
    for (const auto* label : {&kv.from, &kv.to}) {
      const auto it = human_labels.find(*label);
      const std::string& human = it == human_labels.end() ? *label : it->second;
      if (landmark_index(human) < 0) {
        throw Error(ErrorCode::kConfigError, "keypoint '" + *label + "' has no glove landmark");
      }
    }
    if (!(kv.beta.array() > 0.0).all()) {
      throw Error(ErrorCode::kConfigError, "keyvector scale beta must be positive");
    }
  }
}

void RetargetConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "retarget: " + what); };
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (!(eta1 >= 0.0)) fail("eta1 must be non-negative");
  if (!(eta2 > 0.0)) fail("eta2 must be positive");
  if (!(lambda_smooth >= 0.0)) fail("lambda must be non-negative");
  if (!(weight_s1 > 0.0) || !(weight_s2 > 0.0)) fail("weights must be positive");
  if ((q_lower.array() > q_upper.array()).any()) fail("joint bounds are reversed");
  solver.validate();
}

std::map<std::string, std::string> default_human_labels() {
  std::map<std::string, std::string> m = {
      {"thumb_mcp", "thumb_cmc"}, {"thumb_pip", "thumb_mcp"},
      {"thumb_dip", "thumb_ip"},  {"thumb_tip", "thumb_tip"},
  };
  for (int d = 1; d < kDigitCount; ++d) {
    for (int p = 0; p < 4; ++p) {
      const auto label = KeypointSet::digit_label(d, static_cast<DigitPoint>(p));
      m[label] = label;
    }
  }
  return m;
}

RetargetConfig default_retarget_config(const HandGeometry& g) {
  RetargetConfig cfg;
  for (int d = 0; d < kDigitCount; ++d) {
    for (int j = 0; j < 4; ++j) {
      cfg.q_lower[4 * d + j] = g.digits[d].q_limits[j].lower;
      cfg.q_upper[4 * d + j] = g.digits[d].q_limits[j].upper;
    }
  }
  cfg.solver.max_iterations = 100;
  cfg.solver.residual_tolerance = 1e-12;
  cfg.solver.step_tolerance = 1e-12;
  cfg.solver.initial_damping = 1e-3;
  cfg.human_labels = default_human_labels();
  return cfg;
}

double weight(double d, Membership m, const RetargetConfig& cfg) {
  if (d > cfg.epsilon) return 1.0;
  switch (m) {
    case Membership::kS1: return cfg.weight_s1;
    case Membership::kS2: return cfg.weight_s2;
    case Membership::kNone: return 1.0;
  }
  return 1.0;
}

double target_length(double d, Membership m, double beta, const RetargetConfig& cfg) {
  if (d > cfg.epsilon || m == Membership::kNone) return beta * d;
  return m == Membership::kS1 ? cfg.eta1 : cfg.eta2;
}

Vector3d target_vector(const Vector3d& v, Membership m, const Vector3d& beta,
                       const RetargetConfig& cfg) {
  const double d = std::max(v.norm(), kDistanceFloor);
  const Vector3d scaled = beta.cwiseProduct(v);
  const double scaled_norm = std::max(scaled.norm(), kDistanceFloor);
  const Vector3d unit = scaled / scaled_norm;
  if (d > cfg.epsilon || m == Membership::kNone) return scaled_norm * unit;
  return (m == Membership::kS1 ? cfg.eta1 : cfg.eta2) * unit;
}

std::array<Vector3d, kKeyvectorCount> extract_keyvectors(const HumanHandFrame& frame,
                                                         const KeyvectorSpec& spec,
                                                         const RetargetConfig& cfg) {
  std::array<Vector3d, kKeyvectorCount> out;
  const Eigen::Matrix3d r = cfg.glove_to_hand.linear();
  for (int i = 0; i < kKeyvectorCount; ++i) {
    const auto& a = frame.landmarks[resolve_human(spec[i].from, cfg)].position;
    const auto& b = frame.landmarks[resolve_human(spec[i].to, cfg)].position;
    out[i] = r * (b - a);
  }
  return out;
}

std::array<Vector3d, kKeyvectorCount> robot_keyvectors(const KeypointSet& k, const KeyvectorSpec& spec) {
  std::array<Vector3d, kKeyvectorCount> out;
  for (int i = 0; i < kKeyvectorCount; ++i) {
    const auto a = k.find(spec[i].from), b = k.find(spec[i].to);
    if (!a || !b) {
      throw Error(ErrorCode::kMissingLandmark,
                  "unknown robot keypoint in " + spec[i].from + " -> " + spec[i].to);
    }
    out[i] = *b - *a;
  }
  return out;
}

RetargetTargets build_targets(const HumanHandFrame& frame, const KeyvectorSpec& spec,
                              const RetargetConfig& cfg) {
  const auto v = extract_keyvectors(frame, spec, cfg);
  RetargetTargets t;
  for (int i = 0; i < kKeyvectorCount; ++i) {
    const double d = std::max(v[i].norm(), kDistanceFloor);
    t.weights[i] = weight(d, spec[i].membership, cfg);
    t.targets[i] = target_vector(v[i], spec[i].membership, spec[i].beta, cfg);
  }
  return t;
}

RetargetVector to_decision(const HandJointState& q) {
  RetargetVector x;
  for (int d = 0; d < kDigitCount; ++d) {
    x[3 * d] = q.digits[d].q1;
    x[3 * d + 1] = q.digits[d].q2;
    x[3 * d + 2] = q.digits[d].q3;
  }
  return x;
}

HandJointState from_decision(const RetargetVector& x, const HandGeometry& g) {
  HandJointState q;
  for (int d = 0; d < kDigitCount; ++d) {
    q.digits[d] = {x[3 * d], x[3 * d + 1], x[3 * d + 2], solve_dip(x[3 * d + 2], g.digits[d])};
  }
  return q;
}

void residuals_and_jacobian(const RetargetVector& x, const RetargetTargets& targets,
                            const KeyvectorSpec& spec, const RetargetConfig& cfg,
                            const HandJointState& q_prev, const HandGeometry& g,
                            RetargetResidual& r, RetargetJacobian* jac,
                            bool include_dip_chain_rule) {
  const HandJointState q = from_decision(x, g);

  std::array<DigitKeypoints, kDigitCount> points;
  std::array<DigitKeypointJacobian, kDigitCount> point_jac;
  std::array<double, kDigitCount> dq4 {};
  for (int d = 0; d < kDigitCount; ++d) {
    const DigitKeypoints local = link_keypoints(q.digits[d], g.digits[d]);
    for (int p = 0; p < 4; ++p) points[d][p] = g.mounts[d] * local[p];
    if (jac) {
      point_jac[d] = link_keypoints_jacobian(q.digits[d], g.digits[d]);
      for (auto& block : point_jac[d]) block = g.mounts[d].linear() * block;
      dq4[d] = include_dip_chain_rule
                   ? dip_coupling_derivative(q.digits[d].q3, q.digits[d].q4, g.digits[d])
                   : 0.0;
    }
  }

  if (jac) jac->setZero();
  for (int i = 0; i < kKeyvectorCount; ++i) {
    const RobotPoint from = resolve_robot(spec[i].from, g);
    const RobotPoint to = resolve_robot(spec[i].to, g);
    auto position = [&](const RobotPoint& p) { return p.digit < 0 ? p.fixed : points[p.digit][p.point]; };
    const double sw = std::sqrt(targets.weights[i]);
    r.segment<3>(3 * i) = sw * (position(to) - position(from) - targets.targets[i]);
    if (!jac) continue;
    auto accumulate = [&](const RobotPoint& p, double sign) {
      if (p.digit < 0) return;
      const auto& block = point_jac[p.digit][p.point];
      for (int k = 0; k < 3; ++k) jac->block<3, 1>(3 * i, 3 * p.digit + k) += sign * sw * block.col(k);
      jac->block<3, 1>(3 * i, 3 * p.digit + 2) += sign * sw * dq4[p.digit] * block.col(3);
    };
    accumulate(to, 1.0);
    accumulate(from, -1.0);
  }

  const double sl = std::sqrt(cfg.lambda_smooth);
  const int base = 3 * kKeyvectorCount;
  for (int d = 0; d < kDigitCount; ++d) {
    r.segment<4>(base + 4 * d) = sl * (q.digits[d].vector() - q_prev.digits[d].vector());
    if (!jac) continue;
    for (int k = 0; k < 3; ++k) (*jac)(base + 4 * d + k, 3 * d + k) = sl;
    (*jac)(base + 4 * d + 3, 3 * d + 2) = sl * dq4[d];
  }
}

RetargetStepResult retarget_step(const HumanHandFrame& frame, const KeyvectorSpec& spec,
                                 const RetargetConfig& cfg, RetargetState& state,
                                 const HandGeometry& g) {
  // The straight pose is symmetric in PIP flexion, and a solve started there
  // can settle on the q3 = 0 bound with the mirror branch on the other side.
  // Cold solves therefore start from a slightly flexed pose.
  RetargetVector x0;
  if (!state.initialized) {
    state.q_prev = clamp_command(HandJointState{}, g);
    state.initialized = true;
    HandJointState seed;
    for (auto& digit : seed.digits) {
      digit.q2 = kColdSeedFlexion;
      digit.q3 = kColdSeedFlexion;
    }
    x0 = to_decision(clamp_command(seed, g));
  } else {
    x0 = to_decision(state.q_prev);
  }
  RetargetStepResult out;
  out.q = state.q_prev;

  const RetargetTargets targets = build_targets(frame, spec, cfg);
  const HandJointState q_prev = state.q_prev;

  kincore::ResidualProblem problem;
  problem.dimension_x = kRetargetVariables;
  problem.dimension_r = kRetargetRows;
  problem.residual = [&](const kincore::VectorXd& x, kincore::VectorXd& r) {
    RetargetResidual rr;
    residuals_and_jacobian(x, targets, spec, cfg, q_prev, g, rr, nullptr);
    r = rr;
  };
  problem.jacobian = [&](const kincore::VectorXd& x, kincore::MatrixXd& j) {
    RetargetResidual rr;
    RetargetJacobian jj;
    residuals_and_jacobian(x, targets, spec, cfg, q_prev, g, rr, &jj);
    j = jj;
  };
  kincore::VectorXd lower(kRetargetVariables), upper(kRetargetVariables);
  for (int d = 0; d < kDigitCount; ++d) {
    for (int k = 0; k < 3; ++k) {
      lower[3 * d + k] = cfg.q_lower[4 * d + k];
      upper[3 * d + k] = cfg.q_upper[4 * d + k];
    }
  }
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;

  kincore::SolveResult res;
  try {
    res = kincore::solve_least_squares(problem, x0, cfg.solver);
  } catch (const Error&) {
    res.status = kincore::SolveStatus::kDivergedNaN;
  }
  out.status = res.status;
  out.iterations = res.iterations;
  if (!res.converged()) {
    out.held = true;
    return out;
  }
  try {
    out.q = clamp_command(from_decision(res.x_solution, g), g);
  } catch (const Error&) {
    out.status = kincore::SolveStatus::kDivergedNaN;
    out.held = true;
    out.q = state.q_prev;
    return out;
  }
  state.q_prev = out.q;
  return out;
}

void calibrate_betas(const HumanHandFrame& open_hand, KeyvectorSpec& spec, const RetargetConfig& cfg,
                     const HandGeometry& g) {
  const auto human = extract_keyvectors(open_hand, spec, cfg);
  const auto robot = robot_keyvectors(hand_fk(HandJointState{}, g), spec);
  for (int i = 0; i < kKeyvectorCount; ++i) {
    const double h = human[i].norm();
    if (h < kDistanceFloor) {
      throw Error(ErrorCode::kInvalidArgument,
                  "calibration frame has coincident landmarks for " + spec[i].from + " -> " + spec[i].to);
    }
    spec[i].beta = Vector3d::Constant(robot[i].norm() / h);
  }
}

HumanHandFrame synthesize_frame(const HandJointState& q, const HandGeometry& g, const RetargetConfig& cfg,
                                double scale, double timestamp) {
  HumanHandFrame f;
  f.timestamp = timestamp;
  const Eigen::Isometry3d to_glove = cfg.glove_to_hand.inverse();
  std::array<bool, kLandmarkCount> placed{};
  const KeypointSet k = hand_fk(q, g);
  for (const auto& [robot, human] : cfg.human_labels) {
    const int idx = landmark_index(human);
    const auto p = k.find(robot);
    if (idx < 0 || !p) continue;
    f.landmarks[idx].position = to_glove * (scale * *p);
    placed[idx] = true;
  }
  for (int i = 0; i < kLandmarkCount; ++i) {
    if (placed[i]) continue;
    Vector3d p = Vector3d::Zero();
    const auto& label = kLandmarks[i];
    const auto cut = label.find('_');
    if (cut != std::string::npos) {
      const int d = digit_from_name(std::string_view(label).substr(0, cut));
      if (d >= 0) p = g.mounts[d].translation();
    }
    f.landmarks[i].position = to_glove * (scale * p);
  }
  return f;
}

}  // namespace dexkin
