#include "dexkin/error.hpp"
#include "dexkin/runtime.hpp"
#include "dexkin/sampling.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace dexkin;
using testing_support::reference_hand;
using testing_support::source_path;

namespace {

SessionData base_data() {
  SessionData d;
  d.config.record_timing = false;
  d.hand = reference_hand();
  d.retarget.spec = default_keyvector_spec();
  d.retarget.config = default_retarget_config(d.hand);
  d.arm.model = reference_arm();
  d.arm.q_start = reference_arm_home();
  return d;
}

HandJointState open_pose() {
  HandJointState q;
  q.digits[0] = {0.3, 0.2, 0.3, 0.0};
  q.digits[1] = {0.05, 0.4, 0.5, 0.0};
  q.digits[2] = {0.0, 0.6, 0.3, 0.0};
  q.digits[3] = {-0.05, 0.2, 0.9, 0.0};
  q.digits[4] = {-0.1, 0.9, 0.2, 0.0};
  return clamp_command(q, reference_hand());
}

std::vector<HumanHandFrame> constant_glove(double t0, double t1, double rate) {
  SessionData d = base_data();
  std::vector<HumanHandFrame> frames;
  for (int k = 0; t0 + k / rate <= t1 + 1e-12; ++k) {
    frames.push_back(synthesize_frame(open_pose(), d.hand, d.retarget.config, 1.0, t0 + k / rate));
  }
  return frames;
}

}  // namespace

TEST_CASE("no input, no ticks") {
  CHECK(run_replay(base_data()).rows.empty());
}

TEST_CASE("a constant glove pose settles to a constant command") {
  SessionData d = base_data();
  d.glove = constant_glove(0.0, 0.5, 120.0);
  const auto log = run_replay(d);
  REQUIRE(log.rows.size() == 51);
  for (std::size_t k = 10; k < log.rows.size(); ++k) {
    CHECK((log.rows[k].q_hand - log.rows[k - 1].q_hand).cwiseAbs().maxCoeff() <= 1e-9);
  }
  CHECK((log.rows.back().q_hand - open_pose().vector()).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("tick clock, arm cadence and the missing-wrist policy") {
  SessionData d = base_data();
  d.glove = constant_glove(2.0, 2.2, 100.0);
  const auto log = run_replay(d);
  REQUIRE(log.rows.size() == 21);
  for (std::size_t k = 0; k < log.rows.size(); ++k) {
    const auto& r = log.rows[k];
    CHECK(r.tick == static_cast<std::int64_t>(k));
    CHECK(r.timestamp == 2.0 + static_cast<double>(k) / 100.0);
    const bool update = k % 2 == 0;
    CHECK(static_cast<bool>(r.flags & io::kArmUpdated) == update);
    if (update) CHECK((r.flags & (io::kArmHeld | io::kArmInputGap)) == (io::kArmHeld | io::kArmInputGap));
    CHECK(r.q_arm == d.arm.q_start);
    CHECK(r.q_dot_arm.isZero(0.0));
    CHECK((r.flags & io::kHandHeld) == 0);
    CHECK(r.tick_us == 0.0);
  }
}

TEST_CASE("a glove gap holds the last hand command") {
  SessionData d = base_data();
  d.glove = constant_glove(0.0, 0.3, 100.0);
  auto late = constant_glove(0.8, 1.0, 100.0);
  // Late frames ask for a different pose so the resume is visible.
  HandJointState other = open_pose();
  other.digits[1].q2 = 1.0;
  for (auto& f : late) f = synthesize_frame(other, d.hand, d.retarget.config, 1.0, f.timestamp);
  d.glove.insert(d.glove.end(), late.begin(), late.end());
  const auto log = run_replay(d);
  REQUIRE(log.rows.size() == 101);
  const auto& last_live = log.rows[30];
  for (int k = 31; k < 80; ++k) {
    const auto& r = log.rows[k];
    // The last frame stays fresh for input_timeout.
    const bool stale = r.timestamp - 0.3 > d.config.input_timeout;
    CAPTURE(k);
    CHECK(static_cast<bool>(r.flags & io::kHandInputGap) == stale);
    if (stale) {
      CHECK(r.q_hand == last_live.q_hand);
      CHECK(r.d_hand == last_live.d_hand);
    }
  }
  CHECK((log.rows[80].flags & io::kHandHeld) == 0);
  CHECK(log.rows[80].q_hand != last_live.q_hand);
}

TEST_CASE("emitted hand commands are feasible and already clamped") {
  SessionData d = base_data();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 30; ++k) {
    d.glove.push_back(synthesize_frame(sample_hand_state(d.hand, rng), d.hand, d.retarget.config, 1.2, 0.01 * k));
  }
  for (const auto& r : run_replay(d).rows) {
    const HandJointState q = HandJointState::from(r.q_hand);
    CHECK(clamp_command(q, d.hand) == q);
    CHECK(command_is_feasible(q, d.hand));
  }
}

TEST_CASE("replay of the pinch session is deterministic and matches the golden log") {
  const SessionConfig cfg = load_session(source_path("fixtures/pinch_session.json"));
  const SessionData data = load_session_data(cfg);
  const auto golden = io::parse_command_log(source_path("fixtures/pinch_golden.csv"));
  const auto first = run_replay(data);
  CHECK(first == run_replay(data));
  CHECK(first == golden);
  for (int threads : {2, 4, 7}) {
    SessionData t = data;
    t.config.threads = threads;
    CHECK(run_replay(t) == golden);
  }
}

TEST_CASE("wrist motion moves the arm and reports velocities") {
  const SessionConfig cfg = load_session(source_path("fixtures/pinch_session.json"));
  const auto log = run_replay(cfg);
  REQUIRE_FALSE(log.rows.empty());
  double moved = 0.0;
  for (const auto& r : log.rows) {
    moved = std::max(moved, (r.q_arm - log.rows.front().q_arm).norm());
    CHECK((r.flags & io::kArmHeld) == 0);
  }
  CHECK(moved > 1e-3);
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  CHECK(percentile(v, 50.0) == 50.0);
  CHECK(percentile(v, 99.0) == 99.0);
  CHECK(percentile(v, 99.5) == 100.0);
  CHECK(percentile(v, 100.0) == 100.0);
  CHECK(percentile({7.0}, 1.0) == 7.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n : {1, 2, 3, 10, 101, 1000}) {
    std::vector<double> s(n);
    for (auto& x : s) x = u(rng);
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    for (double p : {1.0, 25.0, 50.0, 90.0, 99.0}) {
      // Smallest value with at least p percent of the sample at or below it.
      std::size_t i = 0;
      while (100.0 * static_cast<double>(i + 1) < p * n) ++i;
      CHECK(percentile(s, p) == sorted[i]);
    }
  }
  CHECK_THROWS_AS(percentile({}, 50.0), Error);
  CHECK_THROWS_AS(percentile({1.0}, 0.0), Error);
}

TEST_CASE("latency report") {
  io::CommandLog log;
  for (int k = 0; k < 200; ++k) {
    io::CommandRow r;
    r.tick = k;
    r.retarget_us = k + 1;
    r.hand_ik_us = 2.0;
    r.arm_us = k % 2 == 0 ? 30.0 : 0.0;
    r.tick_us = r.retarget_us + r.hand_ik_us + r.arm_us;
    r.flags = k % 2 == 0 ? io::kArmUpdated : 0;
    if (k == 5) r.flags |= io::kHandHeld;
    log.rows.push_back(r);
  }
  log.rows[7].tick_us = 20000.0;
  log.rows[9].tick_us = 20001.0;
  log.rows[11].tick_us = 20000.5;
  const LatencyReport rep = latency_report(log);
  CHECK(rep.ticks == 200);
  CHECK(rep.hand_held == 1);
  CHECK(rep.arm.samples == 100);
  CHECK(rep.arm.median_us == 30.0);
  CHECK(rep.retarget.median_us == 100.0);
  CHECK(rep.retarget.p99_us == 198.0);
  CHECK(rep.retarget.max_us == 200.0);
  CHECK(rep.tick.max_us == 20001.0);
  // Rank 198 of 200 is the smallest of the three slow ticks.
  CHECK(rep.tick.p99_us == 20000.0);
  CHECK_FALSE(rep.hand_budget_met);
  CHECK(rep.arm_budget_met);
  CHECK_THROWS_AS(latency_report(io::CommandLog{}), Error);
}

TEST_CASE("session files") {
  const SessionConfig s = load_session(source_path("fixtures/pinch_session.json"));
  CHECK(s.glove_stream == source_path("fixtures/../fixtures/pinch_glove.jsonl").lexically_normal());
  CHECK_FALSE(s.record_timing);
  const SessionConfig back = session_from_json(session_to_json(s), "/");
  CHECK(back.hand_rate == s.hand_rate);
  CHECK(back.glove_stream == s.glove_stream);
  CHECK_THROWS_AS(session_from_json("{\"format_version\":1,\"hand_rate_hz\":100,\"arm_rate_hz\":200}", "/"), Error);
  CHECK_THROWS_AS(session_from_json("{\"format_version\":9}", "/"), Error);
}
