#include "dexkin/hand.hpp"

#include "dexkin/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace dexkin {

namespace {

constexpr const char* kDigitNames[kDigitCount] = {"thumb", "index", "middle", "ring", "pinky"};
constexpr const char* kPointNames[4] = {"mcp", "pip", "dip", "tip"};

}  // namespace

const char* digit_name(int digit) {
  return digit >= 0 && digit < kDigitCount ? kDigitNames[digit] : "unknown";
}

int digit_from_name(std::string_view name) {
  for (int i = 0; i < kDigitCount; ++i)
    if (name == kDigitNames[i]) return i;
  return -1;
}

void HandGeometry::validate() const {
  for (int i = 0; i < kDigitCount; ++i) {
    try {
      digits[i].validate();
    } catch (const Error& e) {
      throw Error(e.code(), std::string(digit_name(i)) + ": " + e.what());
    }
    const Eigen::Matrix3d r = mounts[i].linear();
    if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(r.determinant() - 1.0) > 1e-9) {
      throw Error(ErrorCode::kConfigError,
                  std::string(digit_name(i)) + ": mount is not a rigid transform");
    }
    const auto& c = coupled_limits[i];
    if (c.enabled && (!(c.abduction_half_range >= 0.0) || !(c.flexion_at_zero > 0.0))) {
      throw Error(ErrorCode::kConfigError,
                  std::string(digit_name(i)) + ": coupled limit parameters out of range");
    }
  }
}

HandVector HandJointState::vector() const {
  HandVector v;
  for (int i = 0; i < kDigitCount; ++i) v.segment<4>(4 * i) = digits[i].vector();
  return v;
}

HandJointState HandJointState::from(const HandVector& v) {
  HandJointState s;
  for (int i = 0; i < kDigitCount; ++i) s.digits[i] = FingerJointState::from(v.segment<4>(4 * i));
  return s;
}

ActuatorVector HandActuation::vector() const {
  ActuatorVector v;
  for (int i = 0; i < kDigitCount; ++i) v.segment<3>(3 * i) = digits[i].vector();
  return v;
}

HandActuation HandActuation::from(const ActuatorVector& v) {
  HandActuation a;
  for (int i = 0; i < kDigitCount; ++i) a.digits[i] = ActuatorState::from(v.segment<3>(3 * i));
  return a;
}

std::string KeypointSet::digit_label(int digit, DigitPoint point) {
  return std::string(digit_name(digit)) + "_" + kPointNames[static_cast<int>(point)];
}

int KeypointSet::digit_label_index(std::string_view label) {
  const auto sep = label.find('_');
  if (sep == std::string_view::npos) return -1;
  const int digit = digit_from_name(label.substr(0, sep));
  if (digit < 0) return -1;
  const auto point = label.substr(sep + 1);
  for (int p = 0; p < 4; ++p)
    if (point == kPointNames[p]) return 4 * digit + p;
  return -1;
}

std::optional<Vector3d> KeypointSet::find(std::string_view label) const {
  const int idx = digit_label_index(label);
  if (idx >= 0) return digit_points_[idx];
  for (const auto& [name, p] : palm_)
    if (name == label) return p;
  return std::nullopt;
}

std::vector<std::string> KeypointSet::labels() const {
  std::vector<std::string> out;
  for (int d = 0; d < kDigitCount; ++d)
    for (int p = 0; p < 4; ++p) out.push_back(digit_label(d, static_cast<DigitPoint>(p)));
  for (const auto& [name, _] : palm_) out.push_back(name);
  return out;
}

KeypointSet hand_fk(const HandJointState& q, const HandGeometry& g) {
  KeypointSet out;
  for (int d = 0; d < kDigitCount; ++d) {
    const DigitKeypoints local = link_keypoints(q.digits[d], g.digits[d]);
    for (int p = 0; p < 4; ++p) out.at(d, static_cast<DigitPoint>(p)) = g.mounts[d] * local[p];
  }
  out.palm() = g.palm_keypoints;
  return out;
}

HandActuation hand_ik(const HandJointState& q_cmd, const HandGeometry& g,
                      const std::optional<HandActuation>& warm, int threads) {
  HandActuation out;
  std::array<std::exception_ptr, kDigitCount> failures{};

  auto solve_digit = [&](int d) {
    try {
      std::optional<ActuatorState> w;
      if (warm) w = warm->digits[d];
      out.digits[d] = finger_ik(q_cmd.digits[d], g.digits[d], w);
    } catch (...) {
      failures[d] = std::current_exception();
    }
  };

  const int workers = std::clamp(threads, 1, kDigitCount);
  if (workers == 1) {
    for (int d = 0; d < kDigitCount; ++d) solve_digit(d);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int d = w; d < kDigitCount; d += workers) solve_digit(d);
      });
    }
  }

  for (int d = 0; d < kDigitCount; ++d) {
    if (!failures[d]) continue;
    try {
      std::rethrow_exception(failures[d]);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(digit_name(d)) + ": " + e.what());
    }
  }
  return out;
}

JointLimit coupled_mcp_limit(double q2, const CoupledLimit& limit) {
  const double taper = std::max(0.0, 1.0 - std::abs(q2) / limit.flexion_at_zero);
  const double a = limit.abduction_half_range * taper;
  return {-a, a};
}

HandJointState clamp_command(const HandJointState& q_cmd, const HandGeometry& g) {
  HandJointState out;
  for (int d = 0; d < kDigitCount; ++d) {
    const auto& lim = g.digits[d].q_limits;
    const FingerJointState& in = q_cmd.digits[d];
    FingerJointState& q = out.digits[d];
    q.q2 = lim[1].clamp(in.q2);
    q.q3 = lim[2].clamp(in.q3);
    q.q1 = lim[0].clamp(in.q1);
    if (g.coupled_limits[d].enabled) {
      q.q1 = coupled_mcp_limit(q.q2, g.coupled_limits[d]).clamp(q.q1);
    }
    q.q4 = solve_dip(q.q3, g.digits[d]);
  }
  return out;
}

bool command_is_feasible(const HandJointState& q, const HandGeometry& g, double tol) {
  for (int d = 0; d < kDigitCount; ++d) {
    const auto& s = q.digits[d];
    const auto& lim = g.digits[d].q_limits;
    if (!lim[0].contains(s.q1, tol) || !lim[1].contains(s.q2, tol) || !lim[2].contains(s.q3, tol) ||
        !lim[3].contains(s.q4, 1e-9)) {
      return false;
    }
    if (g.coupled_limits[d].enabled &&
        !coupled_mcp_limit(s.q2, g.coupled_limits[d]).contains(s.q1, tol)) {
      return false;
    }
    if (std::abs(dip_residual(s.q3, s.q4, g.digits[d])) > 1e-9) return false;
  }
  return true;
}

}  // namespace dexkin
