#include "dexkin/runtime.hpp"

#include "dexkin/error.hpp"
#include "dexkin/reference_geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace dexkin {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double elapsed_us(Clock::time_point start) {
  return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

struct HandTick {
  HandVector q = HandVector::Zero();
  ActuatorVector d = ActuatorVector::Zero();
  std::uint32_t flags = 0;
  double retarget_us = 0.0;
  double hand_ik_us = 0.0;
};

struct ArmTick {
  Vector7d q = Vector7d::Zero();
  Vector7d q_dot = Vector7d::Zero();
  std::uint32_t flags = 0;
  double arm_us = 0.0;
};

// Zero-order hold over a time-sorted stream.
template <typename Record>
class Holder {
 public:
  explicit Holder(const std::vector<Record>& records) : records_(records) {}

  const Record* at(double t) {
    while (next_ < records_.size() && records_[next_].timestamp <= t) ++next_;
    return next_ == 0 ? nullptr : &records_[next_ - 1];
  }

 private:
  const std::vector<Record>& records_;
  std::size_t next_ = 0;
};

class HandStage {
 public:
  HandStage(const SessionData& data, const KeyvectorSpec& spec)
      : data_(data), spec_(spec), glove_(data.glove) {
    q_cmd_ = clamp_command(HandJointState{}, data.hand);
    d_cmd_ = hand_ik(q_cmd_, data.hand);
    state_.q_prev = q_cmd_;
  }

  HandTick step(double t) {
    HandTick out;
    const bool timing = data_.config.record_timing;
    const HumanHandFrame* frame = glove_.at(t);
    if (frame == nullptr || t - frame->timestamp > data_.config.input_timeout) {
      out.flags |= io::kHandHeld | io::kHandInputGap;
    } else {
      const RetargetState saved = state_;
      auto start = Clock::now();
      std::optional<HandJointState> q;
      try {
        const auto res = retarget_step(*frame, spec_, data_.retarget.config, state_, data_.hand);
        if (!res.held) q = res.q;
      } catch (const Error&) {
        state_ = saved;
      }
      if (timing) out.retarget_us = elapsed_us(start);

      if (q) {
        start = Clock::now();
        try {
          d_cmd_ = hand_ik(*q, data_.hand, d_cmd_, data_.config.threads);
          q_cmd_ = *q;
        } catch (const Error&) {
          state_ = saved;
          q.reset();
        }
        if (timing) out.hand_ik_us = elapsed_us(start);
      }
      if (!q) out.flags |= io::kHandHeld | io::kHandSolveFailed;
    }
    out.q = q_cmd_.vector();
    out.d = d_cmd_.vector();
    return out;
  }

 private:
  const SessionData& data_;
  const KeyvectorSpec& spec_;
  Holder<HumanHandFrame> glove_;
  RetargetState state_;
  HandJointState q_cmd_;
  HandActuation d_cmd_;
};

class ArmStage {
 public:
  explicit ArmStage(const SessionData& data) : data_(data), wrist_(data.wrist) {
    state_.q = data.arm.q_start;
    start_pose_ = arm_fk(data.arm.q_start, data.arm.model);
    cfg_ = data.arm.ik;
    cfg_.dt = 1.0 / data.config.arm_rate;
  }

  ArmTick step(std::int64_t tick, double t) {
    ArmTick out;
    const auto slot = [&](std::int64_t k) {
      return static_cast<std::int64_t>(std::floor(static_cast<double>(k) * data_.config.arm_rate /
                                                       data_.config.hand_rate +
                                                   1e-9));
    };
    if (tick == 0 || slot(tick) != slot(tick - 1)) {
      out.flags |= io::kArmUpdated;
      const io::WristRecord* rec = wrist_.at(t);
      if (rec == nullptr || t - rec->timestamp > data_.config.input_timeout) {
        out.flags |= io::kArmHeld | io::kArmInputGap;
        hold();
      } else {
        Eigen::Isometry3d target = Eigen::Isometry3d::Identity();
        target.linear() = rec->pose.linear() * start_pose_.linear();
        target.translation() = start_pose_.translation() + rec->pose.translation();
        const auto start = Clock::now();
        try {
          const auto res = arm_step(state_, target, data_.arm.model, cfg_);
          if (!res.state.q.allFinite() || !res.q_dot.allFinite()) {
            throw Error(ErrorCode::kNonFiniteEvaluation, "arm step produced a non-finite value");
          }
          state_ = res.state;
          q_dot_ = res.q_dot;
        } catch (const Error&) {
          out.flags |= io::kArmHeld | io::kArmSolveFailed;
          hold();
        }
        if (data_.config.record_timing) out.arm_us = elapsed_us(start);
      }
    }
    out.q = state_.q;
    out.q_dot = q_dot_;
    return out;
  }

 private:
  void hold() {
    q_dot_.setZero();
    state_.q_dot_prev.setZero();
  }

  const SessionData& data_;
  Holder<io::WristRecord> wrist_;
  ArmState state_;
  Vector7d q_dot_ = Vector7d::Zero();
  Eigen::Isometry3d start_pose_;
  ArmIKConfig cfg_;
};

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : root / path;
}

}  // namespace

void SessionConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "session: " + what); };
  if (!(hand_rate > 0.0) || !std::isfinite(hand_rate)) fail("hand_rate_hz must be positive");
  if (!(arm_rate > 0.0) || !std::isfinite(arm_rate)) fail("arm_rate_hz must be positive");
  if (arm_rate > hand_rate) fail("arm_rate_hz must not exceed hand_rate_hz");
  if (!(input_timeout > 0.0)) fail("input_timeout_s must be positive");
  if (threads < 1) fail("threads must be at least 1");
}

SessionConfig session_from_json(const std::string& text, const std::filesystem::path& root) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("session: ") + e.what());
  }
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "session: " + what); };
  if (!j.is_object()) fail("expected an object");
  if (!j.contains("format_version") || !j.at("format_version").is_number_integer()) fail("missing format_version");
  if (j.at("format_version").get<int>() != io::kFormatVersion) {
    throw Error(ErrorCode::kVersionError, "session: unsupported format_version " + j.at("format_version").dump());
  }
  static const std::set<std::string> known = {
      "format_version", "hand_rate_hz", "arm_rate_hz", "input_timeout_s", "glove_stream", "wrist_stream",
      "hand_geometry", "retarget_config", "arm_config", "realtime", "record_timing", "calibrate_betas", "threads"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) io::warn("session: ignoring unknown field '" + key + "'");
  }

  SessionConfig s;
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) fail(std::string(key) + " must be a number");
    out = j.at(key).get<double>();
  };
  auto flag = [&](const char* key, bool& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_boolean()) fail(std::string(key) + " must be a boolean");
    out = j.at(key).get<bool>();
  };
  auto path = [&](const char* key, std::filesystem::path& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) fail(std::string(key) + " must be a string");
    out = resolve(root, j.at(key).get<std::string>());
  };
  num("hand_rate_hz", s.hand_rate);
  num("arm_rate_hz", s.arm_rate);
  num("input_timeout_s", s.input_timeout);
  path("glove_stream", s.glove_stream);
  path("wrist_stream", s.wrist_stream);
  path("hand_geometry", s.hand_geometry);
  path("retarget_config", s.retarget_config);
  path("arm_config", s.arm_config);
  flag("realtime", s.realtime);
  flag("record_timing", s.record_timing);
  flag("calibrate_betas", s.calibrate_betas);
  if (j.contains("threads")) {
    if (!j.at("threads").is_number_integer()) fail("threads must be an integer");
    s.threads = j.at("threads").get<int>();
  }
  s.validate();
  return s;
}

SessionConfig load_session(const std::filesystem::path& path, const std::filesystem::path& root) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return session_from_json(ss.str(), root.empty() ? path.parent_path() : root);
}

std::string session_to_json(const SessionConfig& s) {
  json j;
  j["format_version"] = io::kFormatVersion;
  j["hand_rate_hz"] = s.hand_rate;
  j["arm_rate_hz"] = s.arm_rate;
  j["input_timeout_s"] = s.input_timeout;
  j["glove_stream"] = s.glove_stream.generic_string();
  j["wrist_stream"] = s.wrist_stream.generic_string();
  j["hand_geometry"] = s.hand_geometry.generic_string();
  j["retarget_config"] = s.retarget_config.generic_string();
  j["arm_config"] = s.arm_config.generic_string();
  j["realtime"] = s.realtime;
  j["record_timing"] = s.record_timing;
  j["calibrate_betas"] = s.calibrate_betas;
  j["threads"] = s.threads;
  return j.dump(2) + "\n";
}

SessionData load_session_data(const SessionConfig& config) {
  config.validate();
  SessionData data;
  data.config = config;
  data.hand = config.hand_geometry.empty() ? make_reference_hand() : io::load_hand_geometry(config.hand_geometry);
  if (config.retarget_config.empty()) {
    data.retarget.spec = default_keyvector_spec();
    data.retarget.config = default_retarget_config(data.hand);
  } else {
    data.retarget = io::load_retarget_config(config.retarget_config, data.hand);
  }
  if (config.arm_config.empty()) {
    data.arm.model = reference_arm();
    data.arm.q_start = reference_arm_home();
  } else {
    data.arm = io::load_arm_config(config.arm_config);
  }
  if (!config.glove_stream.empty()) data.glove = io::parse_glove_stream(config.glove_stream);
  if (!config.wrist_stream.empty()) data.wrist = io::parse_wrist_stream(config.wrist_stream);
  return data;
}

io::CommandLog run_replay(const SessionData& data) {
  const auto& cfg = data.config;
  cfg.validate();
  io::CommandLog log;
  if (data.glove.empty() && data.wrist.empty()) return log;

  double t0 = std::numeric_limits<double>::infinity();
  double t_end = -t0;
  if (!data.glove.empty()) {
    t0 = std::min(t0, data.glove.front().timestamp);
    t_end = std::max(t_end, data.glove.back().timestamp);
  }
  if (!data.wrist.empty()) {
    t0 = std::min(t0, data.wrist.front().timestamp);
    t_end = std::max(t_end, data.wrist.back().timestamp);
  }
  const auto ticks = static_cast<std::int64_t>(std::floor((t_end - t0) * cfg.hand_rate + 1e-9)) + 1;
  auto tick_time = [&](std::int64_t k) { return t0 + static_cast<double>(k) / cfg.hand_rate; };

  KeyvectorSpec spec = data.retarget.spec;
  if (cfg.calibrate_betas && !data.glove.empty()) {
    calibrate_betas(data.glove.front(), spec, data.retarget.config, data.hand);
  }

  HandStage hand(data, spec);
  ArmStage arm(data);
  std::vector<HandTick> hand_out(static_cast<std::size_t>(ticks));
  std::vector<ArmTick> arm_out(static_cast<std::size_t>(ticks));

  if (cfg.realtime) {
    const auto wall0 = Clock::now();
    for (std::int64_t k = 0; k < ticks; ++k) {
      std::this_thread::sleep_until(wall0 + std::chrono::duration_cast<Clock::duration>(
                                                std::chrono::duration<double>(tick_time(k) - t0)));
      hand_out[k] = hand.step(tick_time(k));
      arm_out[k] = arm.step(k, tick_time(k));
    }
  } else {
    // The two stages share no state, so with threads > 1 the arm runs beside
    // the hand; each stage stays sequential in tick order.
    auto run_arm = [&] {
      for (std::int64_t k = 0; k < ticks; ++k) arm_out[k] = arm.step(k, tick_time(k));
    };
    std::thread arm_thread;
    if (cfg.threads > 1) arm_thread = std::thread(run_arm);
    for (std::int64_t k = 0; k < ticks; ++k) hand_out[k] = hand.step(tick_time(k));
    if (arm_thread.joinable()) {
      arm_thread.join();
    } else {
      run_arm();
    }
  }

  log.rows.reserve(static_cast<std::size_t>(ticks));
  for (std::int64_t k = 0; k < ticks; ++k) {
    io::CommandRow row;
    row.tick = k;
    row.timestamp = tick_time(k);
    row.q_hand = hand_out[k].q;
    row.d_hand = hand_out[k].d;
    row.q_arm = arm_out[k].q;
    row.q_dot_arm = arm_out[k].q_dot;
    row.retarget_us = hand_out[k].retarget_us;
    row.hand_ik_us = hand_out[k].hand_ik_us;
    row.arm_us = arm_out[k].arm_us;
    row.tick_us = row.retarget_us + row.hand_ik_us + row.arm_us;
    row.flags = hand_out[k].flags | arm_out[k].flags;
    log.rows.push_back(row);
  }
  return log;
}

io::CommandLog run_replay(const SessionConfig& config) { return run_replay(load_session_data(config)); }

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::kInvalidArgument, "percentile outside (0, 100]");
  const auto n = samples.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(rank - 1), samples.end());
  return samples[rank - 1];
}

namespace {

LatencyStats stats(const std::vector<double>& v) {
  LatencyStats s;
  s.samples = v.size();
  if (v.empty()) return s;
  s.median_us = percentile(v, 50.0);
  s.p99_us = percentile(v, 99.0);
  s.max_us = *std::max_element(v.begin(), v.end());
  return s;
}

}  // namespace

LatencyReport latency_report(const io::CommandLog& log) {
  if (log.rows.empty()) throw Error(ErrorCode::kEmptyLog, "latency report of an empty command log");
  std::vector<double> retarget, hand, arm, tick;
  LatencyReport r;
  r.ticks = log.rows.size();
  for (const auto& row : log.rows) {
    retarget.push_back(row.retarget_us);
    hand.push_back(row.hand_ik_us);
    tick.push_back(row.tick_us);
    if (row.flags & io::kArmUpdated) arm.push_back(row.arm_us);
    if (row.flags & io::kHandHeld) ++r.hand_held;
    if (row.flags & io::kArmHeld) ++r.arm_held;
  }
  r.retarget = stats(retarget);
  r.hand_ik = stats(hand);
  r.arm = stats(arm);
  r.tick = stats(tick);
  r.hand_budget_met = r.tick.p99_us <= 1e4;
  r.arm_budget_met = arm.empty() || r.arm.p99_us <= 2e4;
  return r;
}

}  // namespace dexkin
