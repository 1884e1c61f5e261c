#include "dexkin/error.hpp"
#include "dexkin/retarget.hpp"
#include "dexkin/sampling.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dexkin;
using testing_support::reference_hand;

namespace {

RetargetConfig config() { return default_retarget_config(reference_hand()); }

}  // namespace

TEST_CASE("weight and target length follow the piecewise definition") {
  const RetargetConfig cfg = config();
  const double below = 0.5 * cfg.epsilon, above = 2.0 * cfg.epsilon;
  CHECK(weight(above, Membership::kS1, cfg) == 1.0);
  CHECK(weight(above, Membership::kS2, cfg) == 1.0);
  CHECK(weight(above, Membership::kNone, cfg) == 1.0);
  CHECK(weight(below, Membership::kS1, cfg) == 200.0);
  CHECK(weight(below, Membership::kS2, cfg) == 400.0);
  CHECK(weight(below, Membership::kNone, cfg) == 1.0);
  CHECK(target_length(above, Membership::kS1, 0.8, cfg) == 0.8 * above);
  CHECK(target_length(below, Membership::kS1, 0.8, cfg) == cfg.eta1);
  CHECK(target_length(below, Membership::kS2, 0.8, cfg) == cfg.eta2);
  CHECK(target_length(below, Membership::kNone, 0.8, cfg) == 0.8 * below);
  // The switch is strict: d equal to epsilon is "close".
  CHECK(weight(cfg.epsilon, Membership::kS1, cfg) == 200.0);
}

TEST_CASE("target vectors keep the scaled human direction") {
  const RetargetConfig cfg = config();
  const Vector3d beta(1.0, 2.0, 0.5);
  const Vector3d close(0.003, -0.004, 0.0);
  const Vector3d t = target_vector(close, Membership::kS1, beta, cfg);
  CHECK(t.norm() == doctest::Approx(cfg.eta1));
  CHECK((t.normalized() - beta.cwiseProduct(close).normalized()).norm() <= 1e-15);
  const Vector3d far(0.05, 0.02, -0.01);
  CHECK((target_vector(far, Membership::kS2, beta, cfg) - beta.cwiseProduct(far)).norm() <= 1e-17);
  // Coincident landmarks do not produce NaN.
  CHECK(target_vector(Vector3d::Zero(), Membership::kS1, beta, cfg).allFinite());
}

TEST_CASE("keyvectors are read through the glove-to-hand rotation") {
  RetargetConfig cfg = config();
  cfg.glove_to_hand = Eigen::Isometry3d::Identity();
  cfg.glove_to_hand.rotate(Eigen::AngleAxisd(0.7, Vector3d(1, 2, 3).normalized()));
  cfg.glove_to_hand.translation() = Vector3d(0.1, -0.2, 0.3);
  std::mt19937_64 rng(4);
  const HandJointState q = sample_hand_state(reference_hand(), rng);
  const auto spec = default_keyvector_spec();
  const auto human = extract_keyvectors(synthesize_frame(q, reference_hand(), cfg, 1.25), spec, cfg);
  const auto robot = robot_keyvectors(hand_fk(q, reference_hand()), spec);
  for (int i = 0; i < kKeyvectorCount; ++i) CHECK((human[i] - 1.25 * robot[i]).norm() <= 1e-15);
}

TEST_CASE("default keyvector set") {
  const auto spec = default_keyvector_spec();
  int s1 = 0, s2 = 0, none = 0;
  for (const auto& kv : spec) {
    s1 += kv.membership == Membership::kS1;
    s2 += kv.membership == Membership::kS2;
    none += kv.membership == Membership::kNone;
  }
  CHECK(s1 == 4);
  CHECK(s2 == 6);
  CHECK(none == 5);
  CHECK_NOTHROW(validate_keyvector_spec(spec, default_human_labels()));
}

TEST_CASE("invalid keyvector sets are rejected") {
  auto spec = default_keyvector_spec();
  spec[3] = spec[2];
  CHECK_THROWS_AS(validate_keyvector_spec(spec, default_human_labels()), Error);
  spec = default_keyvector_spec();
  auto labels = default_human_labels();
  labels["index_tip"] = "index_nail";
  CHECK_THROWS_AS(validate_keyvector_spec(spec, labels), Error);
}

TEST_CASE("retarget Jacobian matches central differences, DIP column included") {
  const auto& g = reference_hand();
  const RetargetConfig cfg = config();
  const auto spec = default_keyvector_spec();
  std::mt19937_64 rng(8);
  double worst = 0.0, worst_without = 0.0;
  for (int i = 0; i < 50; ++i) {
    const HandJointState q_prev = sample_hand_state(g, rng);
    const RetargetTargets targets = build_targets(synthesize_frame(sample_hand_state(g, rng), g, cfg, 1.1), spec, cfg);
    const RetargetVector x = to_decision(sample_hand_state(g, rng));
    RetargetResidual r;
    RetargetJacobian jac, jac_without;
    residuals_and_jacobian(x, targets, spec, cfg, q_prev, g, r, &jac);
    residuals_and_jacobian(x, targets, spec, cfg, q_prev, g, r, &jac_without, false);
    const Eigen::MatrixXd fd = oracle::central_difference(
        [&](const Eigen::VectorXd& xx) -> Eigen::VectorXd {
          RetargetResidual rr;
          residuals_and_jacobian(xx, targets, spec, cfg, q_prev, g, rr, nullptr);
          return rr;
        },
        x);
    worst = std::max(worst, (fd - jac).cwiseAbs().maxCoeff());
    worst_without = std::max(worst_without, (fd - jac_without).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-7);
  // Dropping the chain-rule term is visible.
  CHECK(worst_without > 1e-3);
}

TEST_CASE("self-retargeting recovers the source pose") {
  const auto& g = reference_hand();
  RetargetConfig cfg = config();
  cfg.lambda_smooth = 0.0;
  const auto spec = default_keyvector_spec();
  // A pose whose fingertips stay clear of the thumb and of each other.
  HandJointState q;
  q.digits[0] = {0.3, 0.2, 0.3, 0.0};
  q.digits[1] = {0.05, 0.4, 0.5, 0.0};
  q.digits[2] = {0.0, 0.6, 0.3, 0.0};
  q.digits[3] = {-0.05, 0.2, 0.9, 0.0};
  q.digits[4] = {-0.1, 0.9, 0.2, 0.0};
  q = clamp_command(q, g);
  RetargetState state;
  const auto res = retarget_step(synthesize_frame(q, g, cfg), spec, cfg, state, g);
  REQUIRE_FALSE(res.held);
  CHECK((res.q.vector() - q.vector()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("a huge smoothness weight holds the previous command") {
  const auto& g = reference_hand();
  RetargetConfig cfg = config();
  cfg.lambda_smooth = 1e9;
  const auto spec = default_keyvector_spec();
  std::mt19937_64 rng(12);
  RetargetState state;
  state.initialized = true;
  state.q_prev = sample_hand_state(g, rng);
  const HandJointState before = state.q_prev;
  const auto res = retarget_step(synthesize_frame(sample_hand_state(g, rng), g, cfg, 1.1), spec, cfg, state, g);
  REQUIRE_FALSE(res.held);
  CHECK((res.q.vector() - before.vector()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("the step toward a new target shrinks as the smoothness weight grows") {
  const auto& g = reference_hand();
  const auto spec = default_keyvector_spec();
  std::mt19937_64 rng(13);
  const HandJointState start = sample_hand_state(g, rng);
  const HumanHandFrame frame = synthesize_frame(sample_hand_state(g, rng), g, config(), 1.1);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-6, 1e-4, 1e-2, 1.0, 100.0}) {
    RetargetConfig cfg = config();
    cfg.lambda_smooth = lambda;
    RetargetState state{start, true};
    const auto res = retarget_step(frame, spec, cfg, state, g);
    REQUIRE_FALSE(res.held);
    const double step = (res.q.vector() - start.vector()).norm();
    CAPTURE(lambda);
    CHECK(step <= previous + 1e-9);
    previous = step;
  }
}

TEST_CASE("a failed solve holds the previous command and state") {
  const auto& g = reference_hand();
  RetargetConfig cfg = config();
  cfg.solver.max_iterations = 1;
  const auto spec = default_keyvector_spec();
  std::mt19937_64 rng(14);
  RetargetState state{sample_hand_state(g, rng), true};
  const RetargetState before = state;
  const auto res = retarget_step(synthesize_frame(sample_hand_state(g, rng), g, cfg, 1.1), spec, cfg, state, g);
  CHECK(res.held);
  CHECK(res.q == before.q_prev);
  CHECK(state.q_prev == before.q_prev);
}

TEST_CASE("outputs respect the joint box and the DIP coupling") {
  const auto& g = reference_hand();
  const RetargetConfig cfg = config();
  const auto spec = default_keyvector_spec();
  std::mt19937_64 rng(15);
  RetargetState state;
  for (int i = 0; i < 10; ++i) {
    const auto res = retarget_step(synthesize_frame(sample_hand_state(g, rng), g, cfg, 1.3), spec, cfg, state, g);
    CHECK(command_is_feasible(res.q, g));
    CHECK(clamp_command(res.q, g) == res.q);
  }
}

TEST_CASE("scale calibration from an open hand") {
  const auto& g = reference_hand();
  const RetargetConfig cfg = config();
  auto spec = default_keyvector_spec();
  calibrate_betas(synthesize_frame(HandJointState{}, g, cfg, 1.1), spec, cfg, g);
  for (const auto& kv : spec) CHECK(kv.beta[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
}

TEST_CASE("frames missing a mapped landmark are rejected") {
  RetargetConfig cfg = config();
  cfg.human_labels["ring_tip"] = "ring_nail";
  CHECK_THROWS_AS(build_targets(HumanHandFrame{}, default_keyvector_spec(), cfg), Error);
}
