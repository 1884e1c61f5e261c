#include "dexkin/sampling.hpp"

namespace dexkin {

FingerJointState sample_finger_state(const FingerGeometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](const JointLimit& l) { return l.lower + u(rng) * (l.upper - l.lower); };
  FingerJointState q;
  q.q1 = pick(g.q_limits[0]);
  q.q2 = pick(g.q_limits[1]);
  q.q3 = pick(g.q_limits[2]);
  q.q4 = solve_dip(q.q3, g);
  return q;
}

HandJointState sample_hand_state(const HandGeometry& g, std::mt19937_64& rng) {
  HandJointState q;
  for (int d = 0; d < kDigitCount; ++d) q.digits[d] = sample_finger_state(g.digits[d], rng);
  return clamp_command(q, g);
}

}  // namespace dexkin
