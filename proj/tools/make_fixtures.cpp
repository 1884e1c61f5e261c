// Regenerates config/ and fixtures/ from the reference models.
//
//   make_fixtures <repo root>
//
// The pinch session: a human hand 10% larger than the robot closes thumb and
// index from the open pose until the fingertips are 12 mm apart, holds, and
// opens again. The wrist traces a slow circle with a small yaw.

#include "dexkin/io.hpp"
#include "dexkin/reference_geometry.hpp"
#include "dexkin/runtime.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

using namespace dexkin;
namespace fs = std::filesystem;

namespace {

constexpr double kHumanScale = 1.1;
constexpr double kClosureDistance = 0.012;  // m, human fingertip gap at closure
constexpr double kGloveRate = 120.0;
constexpr double kWristRate = 50.0;
constexpr double kClose = 1.0, kHold = 0.5, kOpen = 1.0;  // s

HandJointState pinch_pose() {
  HandJointState q;
  q.digits[0] = {0.94, 0.375, 0.37, 0.0};
  q.digits[1] = {0.0, 0.96, 1.17, 0.0};
  return q;
}

HandJointState blend(const HandJointState& to, double s, const HandGeometry& g) {
  return clamp_command(HandJointState::from(s * to.vector()), g);
}

double human_gap(double s, const HandGeometry& g) {
  const KeypointSet k = hand_fk(blend(pinch_pose(), s, g), g);
  return kHumanScale * (*k.find("thumb_tip") - *k.find("index_tip")).norm();
}

// Closure fraction with the requested human gap, by bisection (the gap
// shrinks monotonically along the blend).
double closure_fraction(const HandGeometry& g) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (human_gap(mid, g) > kClosureDistance ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double profile(double t) {
  const auto smooth = [](double x) { return 0.5 - 0.5 * std::cos(std::numbers::pi * x); };
  if (t < kClose) return smooth(t / kClose);
  if (t < kClose + kHold) return 1.0;
  return 1.0 - smooth(std::min(1.0, (t - kClose - kHold) / kOpen));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::cout << "wrote " << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <repo root>\n";
    return 64;
  }
  const fs::path root = argv[1];
  const fs::path config = root / "config";
  const fs::path fixtures = root / "fixtures";
  fs::create_directories(config);
  fs::create_directories(fixtures);

  const HandGeometry built = make_reference_hand();
  write_text(config / "hand_reference.json", io::hand_geometry_to_json(built));
  // Everything downstream uses the geometry as read back from disk.
  const HandGeometry hand = io::load_hand_geometry(config / "hand_reference.json");

  io::RetargetSetup retarget{default_keyvector_spec(), default_retarget_config(hand)};
  write_text(config / "retarget_default.json", io::retarget_config_to_json(retarget));

  io::ArmSetup arm{reference_arm(), ArmIKConfig{}, reference_arm_home()};
  arm.ik.dt = 1.0 / kWristRate;
  write_text(config / "arm_reference.json", io::arm_config_to_json(arm));

  // Glove stream.
  const double s_close = closure_fraction(hand);
  const HandJointState pinch = pinch_pose();
  std::vector<HumanHandFrame> frames;
  const double duration = kClose + kHold + kOpen;
  for (int i = 0; i <= static_cast<int>(std::lround(duration * kGloveRate)); ++i) {
    const double t = i / kGloveRate;
    const HandJointState q = blend(pinch, s_close * profile(t), hand);
    frames.push_back(synthesize_frame(q, hand, retarget.config, kHumanScale, t));
  }
  {
    std::ofstream out(fixtures / "pinch_glove.jsonl", std::ios::binary);
    io::write_glove_stream(out, frames);
  }
  std::cout << "wrote " << (fixtures / "pinch_glove.jsonl").string() << " (closure fraction "
            << io::format_double(s_close) << ")\n";

  // Wrist stream.
  std::vector<io::WristRecord> wrist;
  for (int i = 0; i <= static_cast<int>(std::lround(duration * kWristRate)); ++i) {
    const double t = i / kWristRate;
    const double phase = 2.0 * std::numbers::pi * t / duration;
    io::WristRecord r;
    r.timestamp = t;
    r.pose = Eigen::Isometry3d::Identity();
    r.pose.translation() = Eigen::Vector3d(0.03 * (1.0 - std::cos(phase)), 0.03 * std::sin(phase), 0.01 * std::sin(phase));
    r.pose.linear() = Eigen::AngleAxisd(0.2 * std::sin(phase), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    wrist.push_back(r);
  }
  {
    std::ofstream out(fixtures / "pinch_wrist.jsonl", std::ios::binary);
    io::write_wrist_stream(out, wrist);
  }
  std::cout << "wrote " << (fixtures / "pinch_wrist.jsonl").string() << '\n';

  // Session and golden log.
  SessionConfig session;
  session.glove_stream = "pinch_glove.jsonl";
  session.wrist_stream = "pinch_wrist.jsonl";
  session.hand_geometry = "../config/hand_reference.json";
  session.retarget_config = "../config/retarget_default.json";
  session.arm_config = "../config/arm_reference.json";
  session.record_timing = false;
  write_text(fixtures / "pinch_session.json", session_to_json(session));

  const io::CommandLog log = run_replay(load_session(fixtures / "pinch_session.json"));
  io::write_command_log(log, fixtures / "pinch_golden.csv");
  std::cout << "wrote " << (fixtures / "pinch_golden.csv").string() << " (" << log.rows.size() << " ticks)\n";

  // Malformed inputs for the parser tests.
  {
    std::ofstream out(fixtures / "bad_quaternion.jsonl", std::ios::binary);
    std::vector<HumanHandFrame> few(frames.begin(), frames.begin() + 3);
    few[2].landmarks[7].orientation.coeffs() *= 1.01;
    io::write_glove_stream(out, few);
  }
  write_text(fixtures / "empty.jsonl", "");
  {
    std::ostringstream ss;
    io::CommandLog two;
    two.rows.assign(log.rows.begin(), log.rows.begin() + 2);
    io::write_command_log(ss, two);
    std::string text = ss.str();
    text.replace(text.find("format_version=1"), 16, "format_version=7");
    write_text(fixtures / "bad_version_log.csv", text);
  }
  return 0;
}
