#pragma once

// Five digits mounted on a palm: 20 joints, 15 actuators.
//
// Digit order is fixed: thumb = 0, index, middle, ring, pinky = 4. Every digit
// uses the same transmission model. For the thumb, q1 is the abduction joint
// (range [-4 deg, 90 deg] on the reference hand) and is not coupled to flexion.

#include "dexkin/finger.hpp"

#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dexkin {

inline constexpr int kDigitCount = 5;
inline constexpr int kHandJointCount = 20;
inline constexpr int kHandActuatorCount = 15;

enum class Digit { kThumb = 0, kIndex = 1, kMiddle = 2, kRing = 3, kPinky = 4 };

const char* digit_name(int digit);
// Returns -1 when the name is unknown.
int digit_from_name(std::string_view name);

// Linear taper of the allowed MCP abduction half-range with |q2|: full range
// at q2 = 0, zero at |q2| = flexion_at_zero.
struct CoupledLimit {
  bool enabled = false;
  double abduction_half_range = 0.0;
  double flexion_at_zero = 1.0;
};

using CoupledLimitMap = std::array<CoupledLimit, kDigitCount>;

struct HandGeometry {
  std::array<FingerGeometry, kDigitCount> digits;
  std::array<Eigen::Isometry3d, kDigitCount> mounts;  // digit base O in hand base
  CoupledLimitMap coupled_limits{};
  std::vector<std::pair<std::string, Vector3d>> palm_keypoints;

  void validate() const;
};

using HandVector = Eigen::Matrix<double, kHandJointCount, 1>;
using ActuatorVector = Eigen::Matrix<double, kHandActuatorCount, 1>;

struct HandJointState {
  std::array<FingerJointState, kDigitCount> digits{};

  HandVector vector() const;
  static HandJointState from(const HandVector& v);
  bool operator==(const HandJointState&) const = default;
};

struct HandActuation {
  std::array<ActuatorState, kDigitCount> digits{};

  ActuatorVector vector() const;
  static HandActuation from(const ActuatorVector& v);
  bool operator==(const HandActuation&) const = default;
};

// 20 digit keypoints (MCP, PIP, DIP, tip per digit) followed by the palm
// labels, all in the hand base frame.
class KeypointSet {
 public:
  static constexpr int kDigitPoints = 4 * kDigitCount;

  const Vector3d& at(int digit, DigitPoint point) const {
    return digit_points_[4 * digit + static_cast<int>(point)];
  }
  Vector3d& at(int digit, DigitPoint point) { return digit_points_[4 * digit + static_cast<int>(point)]; }

  std::optional<Vector3d> find(std::string_view label) const;
  std::vector<std::string> labels() const;
  std::size_t size() const { return digit_points_.size() + palm_.size(); }

  std::vector<std::pair<std::string, Vector3d>>& palm() { return palm_; }
  const std::vector<std::pair<std::string, Vector3d>>& palm() const { return palm_; }

  // "index_pip", "thumb_tip", ...
  static std::string digit_label(int digit, DigitPoint point);
  // Index into the 20 digit points, or -1.
  static int digit_label_index(std::string_view label);

 private:
  std::array<Vector3d, kDigitPoints> digit_points_{};
  std::vector<std::pair<std::string, Vector3d>> palm_;
};

KeypointSet hand_fk(const HandJointState& q, const HandGeometry& g);

// Actuator displacements for every digit. With threads > 1 the digits are
// split across worker threads; the result does not depend on the split.
// TravelExceeded / NoConvergence are rethrown with the digit name prefixed.
HandActuation hand_ik(const HandJointState& q_cmd, const HandGeometry& g,
                      const std::optional<HandActuation>& warm = std::nullopt, int threads = 1);

// Allowed abduction interval [-a(q2), a(q2)] for a coupled MCP.
JointLimit coupled_mcp_limit(double q2, const CoupledLimit& limit);

// Clamp every joint to its static range (flexion first), then clamp the MCP
// abduction of coupled digits to coupled_mcp_limit of the clamped flexion, and
// recompute q4 from the clamped q3. Idempotent.
HandJointState clamp_command(const HandJointState& q_cmd, const HandGeometry& g);

// True when every joint is inside its static range and coupled limit (with a
// small tolerance) and q4 satisfies the DIP constraint to 1e-9.
bool command_is_feasible(const HandJointState& q, const HandGeometry& g, double tol = 1e-12);

}  // namespace dexkin
