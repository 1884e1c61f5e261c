#pragma once

// Solver latency benchmark. Warm-started samples follow a random walk through
// joint space (successive commands a control tick apart); cold samples start
// every solve from scratch.

#include "dexkin/armik.hpp"
#include "dexkin/hand.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dexkin {

struct BenchEntry {
  std::string name;  // finger_fk, finger_ik, hand_ik, retarget_step, arm_qp, arm_step
  std::string start; // warm or cold
  std::size_t samples = 0;
  double median_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
};

struct BenchReport {
  std::vector<BenchEntry> entries;
  bool finger_budget_met = false;  // warm finger FK and IK medians below 100 us
  bool hand_budget_met = false;    // warm hand_ik p99 below 10 ms

  const BenchEntry* find(const std::string& name, const std::string& start) const;
};

BenchReport run_benchmark(const HandGeometry& hand, int iterations, std::uint64_t seed = 1);

}  // namespace dexkin
