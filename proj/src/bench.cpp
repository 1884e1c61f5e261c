#include "dexkin/bench.hpp"

#include "dexkin/error.hpp"
#include "dexkin/retarget.hpp"
#include "dexkin/runtime.hpp"
#include "dexkin/sampling.hpp"

#include <algorithm>
#include <chrono>
#include <random>

namespace dexkin {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kWalkStep = 0.02;  // rad per tick and joint

double since(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

BenchEntry summarize(std::string name, std::string start, const std::vector<double>& us) {
  BenchEntry e;
  e.name = std::move(name);
  e.start = std::move(start);
  e.samples = us.size();
  if (us.empty()) return e;
  e.median_us = percentile(us, 50.0);
  e.p99_us = percentile(us, 99.0);
  e.max_us = *std::max_element(us.begin(), us.end());
  return e;
}

// Random walk: every joint moves by at most kWalkStep per tick.
HandJointState walk(const HandJointState& q, const HandGeometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-kWalkStep, kWalkStep);
  HandJointState next = q;
  for (auto& f : next.digits) {
    f.q1 += u(rng);
    f.q2 += u(rng);
    f.q3 += u(rng);
  }
  return clamp_command(next, g);
}

}  // namespace

const BenchEntry* BenchReport::find(const std::string& name, const std::string& start) const {
  for (const auto& e : entries)
    if (e.name == name && e.start == start) return &e;
  return nullptr;
}

BenchReport run_benchmark(const HandGeometry& hand, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw Error(ErrorCode::kInvalidArgument, "benchmark needs at least one iteration");
  std::mt19937_64 rng(seed);
  std::vector<double> fk_warm, fk_cold, ik_warm, ik_cold, hand_warm, retarget_warm, arm_qp, arm_full;

  // Finger solves, cold: independent random states.
  for (int i = 0; i < iterations; ++i) {
    const int d = i % kDigitCount;
    const auto& g = hand.digits[d];
    const FingerJointState q = sample_finger_state(g, rng);
    auto start = Clock::now();
    const ActuatorState a = finger_ik(q, g);
    ik_cold.push_back(since(start));
    start = Clock::now();
    const FingerJointState back = finger_fk(a, g);
    fk_cold.push_back(since(start));
    if (!std::isfinite(back.q1)) throw Error(ErrorCode::kNonFiniteEvaluation, "benchmark FK");
  }

  // Warm: the whole hand walks; each solve starts from the previous tick.
  HandJointState q = sample_hand_state(hand, rng);
  HandActuation d = hand_ik(q, hand);
  HandJointState q_fk = q;
  for (int i = 0; i < iterations; ++i) {
    const HandJointState next = walk(q, hand, rng);
    HandActuation next_d;
    for (int k = 0; k < kDigitCount; ++k) {
      auto start = Clock::now();
      next_d.digits[k] = finger_ik(next.digits[k], hand.digits[k], d.digits[k]);
      ik_warm.push_back(since(start));
      start = Clock::now();
      q_fk.digits[k] = finger_fk(next_d.digits[k], hand.digits[k], q_fk.digits[k]);
      fk_warm.push_back(since(start));
    }
    auto start = Clock::now();
    const HandActuation tick = hand_ik(next, hand, d);
    hand_warm.push_back(since(start));
    q = next;
    d = tick;
  }

  // Retargeting on frames synthesized from a second walk.
  {
    const RetargetConfig cfg = default_retarget_config(hand);
    const KeyvectorSpec spec = default_keyvector_spec();
    RetargetState state;
    HandJointState walker = sample_hand_state(hand, rng);
    retarget_step(synthesize_frame(walker, hand, cfg, 1.1), spec, cfg, state, hand);
    for (int i = 0; i < iterations; ++i) {
      walker = walk(walker, hand, rng);
      const HumanHandFrame frame = synthesize_frame(walker, hand, cfg, 1.1);
      const auto start = Clock::now();
      retarget_step(frame, spec, cfg, state, hand);
      retarget_warm.push_back(since(start));
    }
  }

  // Arm: track a slowly moving target from the home pose.
  {
    const ArmModel model = reference_arm();
    const ArmIKConfig cfg;
    ArmState state;
    state.q = reference_arm_home();
    const Eigen::Isometry3d home = arm_fk(state.q, model);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    for (int i = 0; i < iterations; ++i) {
      offset += 0.002 * Eigen::Vector3d(u(rng), u(rng), u(rng));
      offset = offset.cwiseMax(-0.1).cwiseMin(0.1);
      Eigen::Isometry3d target = home;
      target.translation() += offset;

      const Matrix67d jac = tool_jacobian(state.q, model);
      const Vector6d dx = pose_error(arm_fk(state.q, model), target) / cfg.dt;
      const auto [psi, ja] = arm_angle(state.q, model, cfg);
      const VelocityBounds bounds = velocity_bounds(state.q, model, cfg);
      auto start = Clock::now();
      solve_arm_qp(jac, dx, ja, -psi / cfg.dt, state, bounds, cfg);
      arm_qp.push_back(since(start));

      start = Clock::now();
      state = arm_step(state, target, model, cfg).state;
      arm_full.push_back(since(start));
    }
  }

  BenchReport r;
  r.entries.push_back(summarize("finger_fk", "warm", fk_warm));
  r.entries.push_back(summarize("finger_fk", "cold", fk_cold));
  r.entries.push_back(summarize("finger_ik", "warm", ik_warm));
  r.entries.push_back(summarize("finger_ik", "cold", ik_cold));
  r.entries.push_back(summarize("hand_ik", "warm", hand_warm));
  r.entries.push_back(summarize("retarget_step", "warm", retarget_warm));
  r.entries.push_back(summarize("arm_qp", "warm", arm_qp));
  r.entries.push_back(summarize("arm_step", "warm", arm_full));
  r.finger_budget_met = r.find("finger_fk", "warm")->median_us < 100.0 &&
                        r.find("finger_ik", "warm")->median_us < 100.0;
  r.hand_budget_met = r.find("hand_ik", "warm")->p99_us < 1e4;
  return r;
}

}  // namespace dexkin
