// dexkin command-line tool.
//
// Exit codes: 0 ok, 2 unreadable or malformed input, 3 invalid configuration,
// 4 solver did not converge, 5 actuator travel, 64 bad command-line usage.

#include "dexkin/bench.hpp"
#include "dexkin/error.hpp"
#include "dexkin/io.hpp"
#include "dexkin/reference_geometry.hpp"
#include "dexkin/runtime.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <variant>

namespace {

using namespace dexkin;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kInput = 2, kConfig = 3, kNoConvergence = 4, kTravel = 5, kUsage = 64 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError:
    case ErrorCode::kIoError:
    case ErrorCode::kNonMonotoneTimestamp:
    case ErrorCode::kVersionError:
      return kInput;
    case ErrorCode::kNoConvergence:
    case ErrorCode::kSingularCoupling:
    case ErrorCode::kNonFiniteEvaluation:
    case ErrorCode::kDegenerateAxis:
      return kNoConvergence;
    case ErrorCode::kOutOfTravel:
    case ErrorCode::kTravelExceeded:
      return kTravel;
    default:
      return kConfig;
  }
}

// Rows of named cells printed as CSV or JSON lines.
using Cell = std::variant<double, std::int64_t, std::string>;

class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add(std::vector<Cell> row) { rows_.push_back(std::move(row)); }

  void print(std::ostream& out, const std::string& format) const {
    if (format == "json-lines") {
      for (const auto& row : rows_) {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t i = 0; i < columns_.size(); ++i) {
          std::visit([&](const auto& v) { j[columns_[i]] = v; }, row[i]);
        }
        out << j.dump() << '\n';
      }
      return;
    }
    for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
    out << '\n';
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        if (const auto* d = std::get_if<double>(&row[i])) {
          out << io::format_double(*d);
        } else if (const auto* n = std::get_if<std::int64_t>(&row[i])) {
          out << *n;
        } else {
          out << std::get<std::string>(row[i]);
        }
      }
      out << '\n';
    }
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

struct Options {
  std::string root;
  std::string format = "csv";
  std::string geometry;
};

fs::path under_root(const Options& o, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || o.root.empty() ? path : fs::path(o.root) / path;
}

HandGeometry load_hand(const Options& o) {
  return o.geometry.empty() ? make_reference_hand() : io::load_hand_geometry(under_root(o, o.geometry));
}

int digit_arg(const std::string& name) {
  const int d = digit_from_name(name);
  if (d < 0) throw Error(ErrorCode::kConfigError, "unknown digit '" + name + "'");
  return d;
}

int cmd_fk(const Options& o, const std::string& digit, const std::vector<double>& d) {
  const HandGeometry hand = load_hand(o);
  const int k = digit_arg(digit);
  const auto sol = finger_fk_solve(ActuatorState::from(Vector3d(d[0], d[1], d[2])), hand.digits[k]);
  Table t({"digit", "q1_rad", "q2_rad", "q3_rad", "q4_rad", "alpha_rad", "f1", "f2", "g1", "g2", "h"});
  t.add({digit, sol.q.q1, sol.q.q2, sol.q.q3, sol.q.q4, sol.alpha.alpha, sol.residuals.f[0], sol.residuals.f[1],
         sol.residuals.g1, sol.residuals.g2, sol.residuals.h});
  t.print(std::cout, o.format);
  return kOk;
}

int cmd_ik(const Options& o, const std::string& digit, const std::vector<double>& q) {
  const HandGeometry hand = load_hand(o);
  const int k = digit_arg(digit);
  FingerJointState s;
  s.q1 = q[0];
  s.q2 = q[1];
  s.q3 = q[2];
  const auto sol = finger_ik_solve(s, hand.digits[k]);
  Table t({"digit", "d1_m", "d2_m", "d3_m", "q4_rad", "alpha_rad", "f1", "f2", "g1", "g2", "h"});
  t.add({digit, sol.d.d1, sol.d.d2, sol.d.d3, sol.q.q4, sol.alpha.alpha, sol.residuals.f[0], sol.residuals.f[1],
         sol.residuals.g1, sol.residuals.g2, sol.residuals.h});
  t.print(std::cout, o.format);
  return kOk;
}

int cmd_validate(const Options& o) {
  const HandGeometry hand = load_hand(o);
  Table t({"digit", "zero_residual", "d_min_m", "d_max_m", "q4_lower_rad", "q4_upper_rad"});
  for (int k = 0; k < kDigitCount; ++k) {
    const auto& g = hand.digits[k];
    const auto r = constraint_residuals(FingerJointState{}, InternalAngle{}, ActuatorState{}, g);
    auto span = [](const Vector3d& v) {
      return io::format_double(v[0]) + " " + io::format_double(v[1]) + " " + io::format_double(v[2]);
    };
    t.add({std::string(digit_name(k)), r.max_abs(), span(g.d_min), span(g.d_max), g.q_limits[3].lower,
           g.q_limits[3].upper});
  }
  t.print(std::cout, o.format);
  return kOk;
}

void print_latency(const LatencyReport& r, const std::string& format, std::ostream& out) {
  Table t({"stage", "samples", "median_us", "p99_us", "max_us"});
  auto row = [&](const char* name, const LatencyStats& s) {
    t.add({std::string(name), static_cast<std::int64_t>(s.samples), s.median_us, s.p99_us, s.max_us});
  };
  row("retarget", r.retarget);
  row("hand_ik", r.hand_ik);
  row("arm", r.arm);
  row("tick", r.tick);
  t.print(out, format);
  out << "# ticks " << r.ticks << ", hand held " << r.hand_held << ", arm held " << r.arm_held
      << "; 100 Hz budget " << (r.hand_budget_met ? "met" : "MISSED") << ", 50 Hz budget "
      << (r.arm_budget_met ? "met" : "MISSED") << '\n';
}

int cmd_replay(const Options& o, const std::string& session, const std::string& out, int threads,
               bool timing, bool no_timing) {
  const fs::path session_path = under_root(o, session);
  // Paths inside the session file are relative to the file itself.
  SessionConfig cfg = load_session(session_path);
  if (threads > 0) cfg.threads = threads;
  if (timing) cfg.record_timing = true;
  if (no_timing) cfg.record_timing = false;
  cfg.validate();
  const io::CommandLog log = run_replay(cfg);
  if (!out.empty()) io::write_command_log(log, under_root(o, out));
  if (log.rows.empty()) {
    std::cerr << "empty input streams: nothing to replay\n";
    return kOk;
  }
  print_latency(latency_report(log), o.format, std::cout);
  return kOk;
}

int cmd_distances(const Options& o, const std::string& log_path, const std::string& glove_path,
                  const std::string& retarget_path, const std::vector<std::string>& pairs, double human_scale) {
  if (log_path.empty() && glove_path.empty()) {
    throw Error(ErrorCode::kConfigError, "distances needs --log, --glove or both");
  }
  const HandGeometry hand = load_hand(o);
  const RetargetConfig rcfg = retarget_path.empty()
                                  ? default_retarget_config(hand)
                                  : io::load_retarget_config(under_root(o, retarget_path), hand).config;

  struct Pair {
    std::string name;
    std::string a, b;
    int ha = -1, hb = -1;
  };
  std::vector<Pair> ps;
  const KeypointSet rest = hand_fk(HandJointState{}, hand);
  for (const auto& spec : pairs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::kUnknownPair, "pair '" + spec + "' is not a:b");
    Pair p{spec.substr(0, colon) + "-" + spec.substr(colon + 1), spec.substr(0, colon), spec.substr(colon + 1)};
    for (const auto* label : {&p.a, &p.b}) {
      if (!rest.find(*label)) throw Error(ErrorCode::kUnknownPair, "unknown keypoint '" + *label + "'");
    }
    auto human = [&](const std::string& robot) {
      const auto it = rcfg.human_labels.find(robot);
      const int idx = landmark_index(it == rcfg.human_labels.end() ? robot : it->second);
      if (idx < 0) throw Error(ErrorCode::kUnknownPair, "keypoint '" + robot + "' has no glove landmark");
      return idx;
    };
    p.ha = human(p.a);
    p.hb = human(p.b);
    ps.push_back(p);
  }

  std::vector<std::string> cols = {"t_s"};
  for (const auto& p : ps) {
    cols.push_back(p.name + "_human_m");
    cols.push_back(p.name + "_robot_m");
  }
  Table t(cols);

  const std::vector<HumanHandFrame> glove =
      glove_path.empty() ? std::vector<HumanHandFrame>{} : io::parse_glove_stream(under_root(o, glove_path));
  auto human_distance = [&](const HumanHandFrame& f, const Pair& p) {
    return human_scale * (f.landmarks[p.ha].position - f.landmarks[p.hb].position).norm();
  };

  if (!log_path.empty()) {
    const io::CommandLog log = io::parse_command_log(under_root(o, log_path));
    std::size_t next = 0;
    for (const auto& row : log.rows) {
      while (next < glove.size() && glove[next].timestamp <= row.timestamp) ++next;
      const HumanHandFrame* f = next == 0 ? nullptr : &glove[next - 1];
      const KeypointSet k = hand_fk(HandJointState::from(row.q_hand), hand);
      std::vector<Cell> cells = {row.timestamp};
      for (const auto& p : ps) {
        cells.emplace_back(f ? human_distance(*f, p) : std::nan(""));
        cells.emplace_back((*k.find(p.a) - *k.find(p.b)).norm());
      }
      t.add(std::move(cells));
    }
  } else {
    for (const auto& f : glove) {
      std::vector<Cell> cells = {f.timestamp};
      for (const auto& p : ps) {
        cells.emplace_back(human_distance(f, p));
        cells.emplace_back(std::nan(""));
      }
      t.add(std::move(cells));
    }
  }
  t.print(std::cout, o.format);
  return kOk;
}

int cmd_bench(const Options& o, int iterations, std::uint64_t seed) {
  const HandGeometry hand = load_hand(o);
  const BenchReport r = run_benchmark(hand, iterations, seed);
  Table t({"solve", "start", "samples", "median_us", "p99_us", "max_us"});
  for (const auto& e : r.entries) {
    t.add({e.name, e.start, static_cast<std::int64_t>(e.samples), e.median_us, e.p99_us, e.max_us});
  }
  t.print(std::cout, o.format);
  std::cout << "# finger FK/IK warm median < 100 us: " << (r.finger_budget_met ? "yes" : "no")
            << "; hand_ik p99 < 10 ms: " << (r.hand_budget_met ? "yes" : "no") << '\n';
  return kOk;
}

std::vector<double> parse_list(const std::string& text, std::size_t min_n, std::size_t max_n, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(io::parse_double(item));
    } catch (const std::invalid_argument&) {
      throw CLI::ValidationError(what, "'" + item + "' is not a number");
    }
  }
  if (out.size() < min_n || out.size() > max_n) {
    throw CLI::ValidationError(what, "expected " + std::to_string(min_n) + " comma-separated values");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinematics, retargeting and replay tools for a linkage-driven hand and a 7-DoF arm"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.root, "Directory that relative paths are resolved against");
  app.add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"csv", "json-lines"}))
      ->capture_default_str();
  app.add_option("--geometry", o.geometry, "Hand geometry file (default: reference hand)");

  std::string digit = "index";
  std::string d_text, q_text;
  const auto digit_names = CLI::IsMember({"thumb", "index", "middle", "ring", "pinky"});
  auto* fk = app.add_subcommand("fk", "Actuator displacements to joint angles for one digit");
  fk->add_option("--digit", digit, "thumb, index, middle, ring or pinky")
      ->check(digit_names)
      ->capture_default_str();
  fk->add_option("--d", d_text, "d1,d2,d3 in metres")->required();

  auto* ik = app.add_subcommand("ik", "Joint angles to actuator displacements for one digit");
  ik->add_option("--digit", digit, "thumb, index, middle, ring or pinky")
      ->check(digit_names)
      ->capture_default_str();
  ik->add_option("--q", q_text, "q1,q2,q3[,q4] in radians; q4 is recomputed from q3")->required();

  app.add_subcommand("validate-geometry", "Zero-configuration residuals and travel of every digit");

  std::string session, out;
  int threads = 0;
  bool timing = false, no_timing = false;
  auto* replay = app.add_subcommand("replay", "Replay recorded streams through the pipeline");
  replay->add_option("session", session, "Session file")->required();
  replay->add_option("--out", out, "Command log to write");
  replay->add_option("--threads", threads, "Override the session's thread count")->check(CLI::Range(1, 64));
  auto* timing_flag = replay->add_flag("--timing", timing, "Record solve latencies");
  replay->add_flag("--no-timing", no_timing, "Write zero latencies (bitwise-reproducible log)")->excludes(timing_flag);

  std::string log_path, glove_path, retarget_path;
  std::vector<std::string> pairs = {"thumb_tip:index_tip", "thumb_tip:middle_tip"};
  double human_scale = 1.0;
  auto* dist = app.add_subcommand("distances", "Keypoint distances over time from a command log and/or glove stream");
  dist->add_option("--log", log_path, "Command log (robot distances via forward kinematics)");
  dist->add_option("--glove", glove_path, "Glove stream (human distances, held at log ticks)");
  dist->add_option("--retarget", retarget_path, "Retarget config supplying the landmark map");
  dist->add_option("--pairs", pairs, "Robot keypoint pairs a:b")->delimiter(',')->capture_default_str();
  dist->add_option("--human-scale", human_scale, "Factor applied to human distances")->capture_default_str();

  int iterations = 2000;
  std::uint64_t seed = 1;
  auto* bench = app.add_subcommand("bench", "Solver latency distributions");
  bench->add_option("--iterations", iterations, "Samples per solve type")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--seed", seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fk) return cmd_fk(o, digit, parse_list(d_text, 3, 3, "--d"));
    if (*ik) return cmd_ik(o, digit, parse_list(q_text, 3, 4, "--q"));
    if (app.got_subcommand("validate-geometry")) return cmd_validate(o);
    if (*replay) return cmd_replay(o, session, out, threads, timing, no_timing);
    if (*dist) return cmd_distances(o, log_path, glove_path, retarget_path, pairs, human_scale);
    if (*bench) return cmd_bench(o, iterations, seed);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  }
  return kUsage;
}
