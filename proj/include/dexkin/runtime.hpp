#pragma once

// Replay pipeline. Glove frames feed the hand loop (retarget, then hand_ik);
// wrist poses feed the arm loop. Both loops run on one tick clock at hand_rate
// starting from the earliest input timestamp; the arm updates on every tick
// that crosses a 1/arm_rate boundary. Inputs are zero-order held.
//
// Fault policy: when an input is missing or stale, or a solve fails, the
// previous command is repeated and the row is flagged. A held arm reports
// zero velocity.

#include "dexkin/io.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dexkin {

struct SessionConfig {
  double hand_rate = 100.0;  // Hz
  double arm_rate = 50.0;    // Hz, must not exceed hand_rate
  // Input older than this counts as a gap.
  double input_timeout = 0.1;  // s
  std::filesystem::path glove_stream;
  std::filesystem::path wrist_stream;   // empty: no arm input
  std::filesystem::path hand_geometry;  // empty: reference hand
  std::filesystem::path retarget_config;
  std::filesystem::path arm_config;
  bool realtime = false;     // pace ticks by the wall clock
  bool record_timing = true; // false writes zero latencies (bitwise-stable logs)
  bool calibrate_betas = false;  // scale factors from the first glove frame
  int threads = 1;

  void validate() const;
};

// Paths in the file are taken relative to `root` (the session file's
// directory when root is empty).
SessionConfig load_session(const std::filesystem::path& path, const std::filesystem::path& root = {});
SessionConfig session_from_json(const std::string& text, const std::filesystem::path& root);
std::string session_to_json(const SessionConfig& s);

// Everything a replay needs, already loaded.
struct SessionData {
  SessionConfig config;
  HandGeometry hand;
  io::RetargetSetup retarget;
  io::ArmSetup arm;
  std::vector<HumanHandFrame> glove;
  std::vector<io::WristRecord> wrist;
};

SessionData load_session_data(const SessionConfig& config);

io::CommandLog run_replay(const SessionData& data);
io::CommandLog run_replay(const SessionConfig& config);

// Nearest-rank percentile, p in (0, 100]. Throws Error(kInvalidArgument) on
// an empty sample.
double percentile(std::vector<double> samples, double p);

struct LatencyStats {
  double median_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
  std::size_t samples = 0;
};

struct LatencyReport {
  LatencyStats retarget;
  LatencyStats hand_ik;
  LatencyStats arm;    // arm-update ticks only
  LatencyStats tick;
  std::size_t ticks = 0;
  std::size_t hand_held = 0;
  std::size_t arm_held = 0;
  bool hand_budget_met = false;  // tick p99 within 1/100 s
  bool arm_budget_met = false;   // arm p99 within 1/50 s
};

// Throws Error(kEmptyLog).
LatencyReport latency_report(const io::CommandLog& log);

}  // namespace dexkin
