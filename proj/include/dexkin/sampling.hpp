#pragma once

// Random joint states inside the static (and coupled) limits. Used by the
// benchmark, the tests and the fixture generator.

#include "dexkin/hand.hpp"

#include <random>

namespace dexkin {

// Uniform q1..q3 in the static box, q4 from the DIP constraint.
FingerJointState sample_finger_state(const FingerGeometry& g, std::mt19937_64& rng);

// Per-digit samples passed through clamp_command.
HandJointState sample_hand_state(const HandGeometry& g, std::mt19937_64& rng);

}  // namespace dexkin
