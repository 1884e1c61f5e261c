#pragma once

// File formats. Every format carries a format_version; an unknown version is
// a hard error, unknown fields are skipped with a warning.
//
//   configs        JSON, SI units spelled out in the key (_m, _rad, _s, _hz)
//   glove / wrist  JSON lines: a header record, then one record per line
//   command log    CSV with a version line and a header row
//
// Schemas: docs/formats.md.

#include "dexkin/armik.hpp"
#include "dexkin/hand.hpp"
#include "dexkin/retarget.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dexkin::io {

inline constexpr int kFormatVersion = 1;

// Warnings (unknown fields, ignored columns) go through this hook; the
// default writes to stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

// ---- configuration ----------------------------------------------------------

HandGeometry load_hand_geometry(const std::filesystem::path& path);
void save_hand_geometry(const HandGeometry& g, const std::filesystem::path& path);
std::string hand_geometry_to_json(const HandGeometry& g);
HandGeometry hand_geometry_from_json(const std::string& text);

struct RetargetSetup {
  KeyvectorSpec spec;
  RetargetConfig config;
};

// Joint bounds default to the hand's static limits when absent.
RetargetSetup load_retarget_config(const std::filesystem::path& path, const HandGeometry& g);
RetargetSetup retarget_config_from_json(const std::string& text, const HandGeometry& g);
std::string retarget_config_to_json(const RetargetSetup& setup);

struct ArmSetup {
  ArmModel model;
  ArmIKConfig ik;
  Vector7d q_start = Vector7d::Zero();
};

ArmSetup load_arm_config(const std::filesystem::path& path);
ArmSetup arm_config_from_json(const std::string& text);
std::string arm_config_to_json(const ArmSetup& setup);

// ---- streams ------------------------------------------------------------------

struct WristRecord {
  double timestamp = 0.0;
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();  // relative to the start pose
};

// Empty input gives an empty sequence. Errors carry the 1-based line number:
// ParseError for malformed records (including a quaternion whose norm is off
// by more than 1e-6), Error(kNonMonotoneTimestamp) for a timestamp that does
// not increase, Error(kVersionError) for an unknown version.
std::vector<HumanHandFrame> parse_glove_stream(std::istream& in);
std::vector<HumanHandFrame> parse_glove_stream(const std::filesystem::path& path);
void write_glove_stream(std::ostream& out, const std::vector<HumanHandFrame>& frames);

// The first record must be the identity pose.
std::vector<WristRecord> parse_wrist_stream(std::istream& in);
std::vector<WristRecord> parse_wrist_stream(const std::filesystem::path& path);
void write_wrist_stream(std::ostream& out, const std::vector<WristRecord>& records);

// ---- command log ----------------------------------------------------------------

enum CommandFlag : std::uint32_t {
  kHandHeld = 1u << 0,        // hand command repeated from the previous tick
  kArmHeld = 1u << 1,         // arm target repeated, velocity zeroed
  kHandInputGap = 1u << 2,    // no glove frame, or the latest one is stale
  kArmInputGap = 1u << 3,
  kHandSolveFailed = 1u << 4,
  kArmSolveFailed = 1u << 5,
  kArmUpdated = 1u << 6,      // the arm controller ran on this tick
};

struct CommandRow {
  std::int64_t tick = 0;
  double timestamp = 0.0;  // s
  HandVector q_hand = HandVector::Zero();
  ActuatorVector d_hand = ActuatorVector::Zero();
  Vector7d q_arm = Vector7d::Zero();
  Vector7d q_dot_arm = Vector7d::Zero();
  double retarget_us = 0.0;
  double hand_ik_us = 0.0;
  double arm_us = 0.0;
  double tick_us = 0.0;
  std::uint32_t flags = 0;

  bool operator==(const CommandRow&) const = default;
};

struct CommandLog {
  std::vector<CommandRow> rows;
  bool operator==(const CommandLog&) const = default;
};

void write_command_log(std::ostream& out, const CommandLog& log);
void write_command_log(const CommandLog& log, const std::filesystem::path& path);
CommandLog parse_command_log(std::istream& in);
CommandLog parse_command_log(const std::filesystem::path& path);

// Column names of the command log, in order.
std::vector<std::string> command_log_columns();

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);
// Whole-string conversion; throws std::invalid_argument on junk.
double parse_double(std::string_view text);

}  // namespace dexkin::io
