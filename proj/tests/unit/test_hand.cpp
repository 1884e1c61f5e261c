#include "dexkin/error.hpp"
#include "dexkin/hand.hpp"
#include "dexkin/sampling.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dexkin;
using testing_support::reference_hand;

TEST_CASE("digit names round-trip") {
  for (int d = 0; d < kDigitCount; ++d) CHECK(digit_from_name(digit_name(d)) == d);
  CHECK(digit_from_name("toe") == -1);
}

TEST_CASE("hand keypoints are the mounted digit keypoints") {
  const auto& g = reference_hand();
  std::mt19937_64 rng(2);
  const HandJointState q = sample_hand_state(g, rng);
  const KeypointSet k = hand_fk(q, g);
  CHECK(k.size() == 20 + g.palm_keypoints.size());
  for (int d = 0; d < kDigitCount; ++d) {
    const Vector3d tip = g.mounts[d] * oracle::tip(q.digits[d], g.digits[d]);
    CHECK((*k.find(KeypointSet::digit_label(d, DigitPoint::kTip)) - tip).norm() <= 1e-15);
  }
  CHECK(k.find("palm_center").has_value());
  CHECK_FALSE(k.find("elbow").has_value());
  CHECK(KeypointSet::digit_label_index("ring_dip") == 4 * 3 + 2);
}

TEST_CASE("hand_ik does not depend on the thread count") {
  const auto& g = reference_hand();
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const HandJointState q = sample_hand_state(g, rng);
    const HandActuation one = hand_ik(q, g, std::nullopt, 1);
    for (int threads : {2, 3, 5, 8}) CHECK(hand_ik(q, g, std::nullopt, threads) == one);
  }
}

TEST_CASE("hand_ik failures carry the digit name") {
  const auto& g = reference_hand();
  HandJointState q;
  q.digits[3].q2 = 3.0;
  try {
    hand_ik(q, g, std::nullopt, 2);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).rfind("ring:", 0) == 0);
  }
}

TEST_CASE("coupled abduction limit tapers linearly with flexion") {
  const CoupledLimit lim{true, 0.3, 1.5};
  CHECK(coupled_mcp_limit(0.0, lim).upper == 0.3);
  CHECK(coupled_mcp_limit(0.0, lim).lower == -0.3);
  CHECK(coupled_mcp_limit(0.75, lim).upper == doctest::Approx(0.15));
  CHECK(coupled_mcp_limit(-0.75, lim).upper == doctest::Approx(0.15));
  CHECK(coupled_mcp_limit(1.5, lim).upper == 0.0);
  CHECK(coupled_mcp_limit(2.0, lim).upper == 0.0);
}

TEST_CASE("abduction clamps to zero at full flexion") {
  const auto& g = reference_hand();
  for (int d = 1; d < kDigitCount; ++d) {
    HandJointState q;
    q.digits[d].q1 = 0.3;
    q.digits[d].q2 = g.digits[d].q_limits[1].upper;
    CHECK(clamp_command(q, g).digits[d].q1 == 0.0);
    q.digits[d].q1 = -0.3;
    CHECK(clamp_command(q, g).digits[d].q1 == 0.0);
  }
  // The thumb's first joint is not coupled.
  HandJointState q;
  q.digits[0].q1 = 0.5;
  q.digits[0].q2 = g.digits[0].q_limits[1].upper;
  CHECK(clamp_command(q, g).digits[0].q1 == 0.5);
}

TEST_CASE("clamping is idempotent and yields feasible commands") {
  const auto& g = reference_hand();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    HandJointState q;
    for (int d = 0; d < kDigitCount; ++d) {
      const auto& lim = g.digits[d].q_limits;
      q.digits[d] = {lim[0].lower + (lim[0].upper - lim[0].lower) * (u(rng) + 0.5) * 1.4 - 0.2,
                     lim[1].lower + (lim[1].upper - lim[1].lower) * (u(rng) + 0.5) * 1.4 - 0.2,
                     lim[2].lower + (lim[2].upper - lim[2].lower) * (u(rng) + 0.5) * 1.4 - 0.2, u(rng)};
    }
    const HandJointState once = clamp_command(q, g);
    CHECK(clamp_command(once, g) == once);
    CHECK(command_is_feasible(once, g));
  }
  HandJointState bad;
  bad.digits[2].q4 = 0.4;
  CHECK_FALSE(command_is_feasible(bad, g));
}

TEST_CASE("state vectors keep digit-major order") {
  HandJointState q;
  q.digits[2].q3 = 0.7;
  CHECK(q.vector()[4 * 2 + 2] == 0.7);
  CHECK(HandJointState::from(q.vector()) == q);
  HandActuation a;
  a.digits[4].d1 = 0.002;
  CHECK(a.vector()[3 * 4] == 0.002);
  CHECK(HandActuation::from(a.vector()) == a);
}
