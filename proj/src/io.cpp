#include "dexkin/io.hpp"

#include "dexkin/error.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

namespace dexkin::io {

using nlohmann::json;
using Eigen::Isometry3d;
using Eigen::Quaterniond;

namespace {

constexpr const char* kGloveFormat = "dexkin.glove";
constexpr const char* kWristFormat = "dexkin.wrist";
constexpr const char* kLogBanner = "# dexkin command log, format_version=";
constexpr double kQuaternionTolerance = 1e-6;

std::mutex g_warning_mutex;
WarningHandler g_warning_handler;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, what + ": " + e.what());
  }
}

void config_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kConfigError, where + ": " + what);
}

void check_version(const json& j, const std::string& where) {
  if (!j.is_object()) config_fail(where, "expected an object");
  if (!j.contains("format_version")) config_fail(where, "missing format_version");
  const auto& v = j.at("format_version");
  if (!v.is_number_integer() || v.get<int>() != kFormatVersion) {
    throw Error(ErrorCode::kVersionError,
                where + ": unsupported format_version " + v.dump() + " (expected " +
                    std::to_string(kFormatVersion) + ")");
  }
}

void warn_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) return;
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!names.count(key)) warn(where + ": ignoring unknown field '" + key + "'");
  }
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) config_fail(where, std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) config_fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(where, "value is not finite");
  return v;
}

double number(const json& j, const char* key, const std::string& where) {
  return number(field(j, key, where), where + "." + key);
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j, key, where) : fallback;
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    config_fail(where, "expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = number(j[i], where);
  return v;
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const char* key, const std::string& where) {
  return vec<N>(field(j, key, where), where + "." + key);
}

template <typename Derived>
json to_array(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

JointLimit limit(const json& j, const std::string& where) {
  const Eigen::Vector2d v = vec<2>(j, where);
  if (!(v[0] <= v[1])) config_fail(where, "limit must be [lower, upper] with lower <= upper");
  return {v[0], v[1]};
}

json limit_json(const JointLimit& l) { return json::array({l.lower, l.upper}); }

Quaterniond quaternion(const json& j, const std::string& where) {
  const Eigen::Vector4d v = vec<4>(j, where);
  if (std::abs(v.norm() - 1.0) > kQuaternionTolerance) config_fail(where, "quaternion is not unit length");
  return Quaterniond(v[0], v[1], v[2], v[3]).normalized();
}

json quaternion_json(const Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

json transform_json(const Isometry3d& t) {
  return {{"rotation_wxyz", quaternion_json(Quaterniond(t.linear()))},
          {"translation_m", to_array(t.translation())}};
}

Isometry3d transform(const json& j, const std::string& where) {
  warn_unknown(j, {"rotation_wxyz", "translation_m"}, where);
  Isometry3d t = Isometry3d::Identity();
  if (j.contains("rotation_wxyz")) t.linear() = quaternion(j.at("rotation_wxyz"), where + ".rotation_wxyz").toRotationMatrix();
  if (j.contains("translation_m")) t.translation() = vec<3>(j, "translation_m", where);
  return t;
}

// ---- finger / hand ------------------------------------------------------------

constexpr const char* kJointNames[4] = {"q1", "q2", "q3", "q4"};

json finger_json(const FingerGeometry& g) {
  json j;
  j["a1_rest_O_m"] = to_array(g.a1_rest_O);
  j["a2_rest_O_m"] = to_array(g.a2_rest_O);
  j["b1_Pmcp_m"] = to_array(g.b1_Pmcp);
  j["b2_Pmcp_m"] = to_array(g.b2_Pmcp);
  j["mcp_origin_O_m"] = to_array(g.mcp_origin_O);
  j["l1_m"] = g.l1;
  j["l2_m"] = g.l2;
  j["p1_rest_O_m"] = to_array(g.p1_rest_O);
  j["crank_pivot_Pmcp_m"] = to_array(g.crank_pivot_Pmcp);
  j["psu_anchor_P3_m"] = to_array(g.psu_anchor_P3);
  j["crank_coupler_P3_m"] = to_array(g.crank_coupler_P3);
  j["pip_origin_Pmcp_m"] = to_array(g.pip_origin_Pmcp);
  j["pip_coupler_Ppip_m"] = to_array(g.pip_coupler_Ppip);
  j["psu_proximal_m"] = g.psu_proximal;
  j["psu_distal_m"] = g.psu_distal;
  j["pip_link_m"] = g.pip_link;
  j["dip_anchor_Pmcp_m"] = to_array(g.dip_anchor_Pmcp);
  j["dip_origin_Ppip_m"] = to_array(g.dip_origin_Ppip);
  j["dip_coupler_Pdip_m"] = to_array(g.dip_coupler_Pdip);
  j["dip_link_m"] = g.dip_link;
  j["tip_Pdip_m"] = to_array(g.tip_Pdip);
  j["actuator_axis"] = json::array();
  for (const auto& a : g.actuator_axis) j["actuator_axis"].push_back(to_array(a));
  j["d_min_m"] = to_array(g.d_min);
  j["d_max_m"] = to_array(g.d_max);
  for (int i = 0; i < 4; ++i) j["q_limits_rad"][kJointNames[i]] = limit_json(g.q_limits[i]);
  j["alpha_range_rad"] = limit_json(g.alpha_range);
  return j;
}

FingerGeometry finger_from_json(const json& j, const std::string& where) {
  warn_unknown(j,
               {"a1_rest_O_m", "a2_rest_O_m", "b1_Pmcp_m", "b2_Pmcp_m", "mcp_origin_O_m", "l1_m", "l2_m",
                "p1_rest_O_m", "crank_pivot_Pmcp_m", "psu_anchor_P3_m", "crank_coupler_P3_m",
                "pip_origin_Pmcp_m", "pip_coupler_Ppip_m", "psu_proximal_m", "psu_distal_m", "pip_link_m",
                "dip_anchor_Pmcp_m", "dip_origin_Ppip_m", "dip_coupler_Pdip_m", "dip_link_m", "tip_Pdip_m",
                "actuator_axis", "d_min_m", "d_max_m", "q_limits_rad", "alpha_range_rad"},
               where);
  FingerGeometry g;
  g.a1_rest_O = vec<3>(j, "a1_rest_O_m", where);
  g.a2_rest_O = vec<3>(j, "a2_rest_O_m", where);
  g.b1_Pmcp = vec<3>(j, "b1_Pmcp_m", where);
  g.b2_Pmcp = vec<3>(j, "b2_Pmcp_m", where);
  g.mcp_origin_O = vec<3>(j, "mcp_origin_O_m", where);
  g.l1 = number(j, "l1_m", where);
  g.l2 = number(j, "l2_m", where);
  g.p1_rest_O = vec<3>(j, "p1_rest_O_m", where);
  g.crank_pivot_Pmcp = vec<3>(j, "crank_pivot_Pmcp_m", where);
  g.psu_anchor_P3 = vec<3>(j, "psu_anchor_P3_m", where);
  g.crank_coupler_P3 = vec<3>(j, "crank_coupler_P3_m", where);
  g.pip_origin_Pmcp = vec<3>(j, "pip_origin_Pmcp_m", where);
  g.pip_coupler_Ppip = vec<3>(j, "pip_coupler_Ppip_m", where);
  g.psu_proximal = number(j, "psu_proximal_m", where);
  g.psu_distal = number(j, "psu_distal_m", where);
  g.pip_link = number(j, "pip_link_m", where);
  g.dip_anchor_Pmcp = vec<3>(j, "dip_anchor_Pmcp_m", where);
  g.dip_origin_Ppip = vec<3>(j, "dip_origin_Ppip_m", where);
  g.dip_coupler_Pdip = vec<3>(j, "dip_coupler_Pdip_m", where);
  g.dip_link = number(j, "dip_link_m", where);
  g.tip_Pdip = vec<3>(j, "tip_Pdip_m", where);
  if (j.contains("actuator_axis")) {
    const auto& axes = j.at("actuator_axis");
    if (!axes.is_array() || axes.size() != 3) config_fail(where, "actuator_axis needs three vectors");
    for (int i = 0; i < 3; ++i) g.actuator_axis[i] = vec<3>(axes[i], where + ".actuator_axis");
  }
  g.d_min = vec<3>(j, "d_min_m", where);
  g.d_max = vec<3>(j, "d_max_m", where);
  const auto& limits = field(j, "q_limits_rad", where);
  for (int i = 0; i < 4; ++i) {
    g.q_limits[i] = limit(field(limits, kJointNames[i], where + ".q_limits_rad"),
                          where + ".q_limits_rad." + kJointNames[i]);
  }
  if (j.contains("alpha_range_rad")) g.alpha_range = limit(j.at("alpha_range_rad"), where + ".alpha_range_rad");
  try {
    g.validate();
  } catch (const Error& e) {
    config_fail(where, e.what());
  }
  return g;
}

// ---- retarget -----------------------------------------------------------------

Membership membership_from(const std::string& s, const std::string& where) {
  if (s == "none") return Membership::kNone;
  if (s == "S1") return Membership::kS1;
  if (s == "S2") return Membership::kS2;
  config_fail(where, "membership must be none, S1 or S2");
  return Membership::kNone;
}

json solver_json(const kincore::SolverSettings& s) {
  return {{"max_iterations", s.max_iterations},
          {"residual_tolerance", s.residual_tolerance},
          {"step_tolerance", s.step_tolerance},
          {"gradient_tolerance", s.gradient_tolerance},
          {"initial_damping", s.initial_damping},
          {"finite_difference_step", s.finite_difference_step}};
}

kincore::SolverSettings solver_from(const json& j, kincore::SolverSettings s, const std::string& where) {
  warn_unknown(j, {"max_iterations", "residual_tolerance", "step_tolerance", "gradient_tolerance",
                   "initial_damping", "finite_difference_step"},
               where);
  if (j.contains("max_iterations")) {
    if (!j.at("max_iterations").is_number_integer()) config_fail(where, "max_iterations must be an integer");
    s.max_iterations = j.at("max_iterations").get<int>();
  }
  s.residual_tolerance = number_or(j, "residual_tolerance", s.residual_tolerance, where);
  s.step_tolerance = number_or(j, "step_tolerance", s.step_tolerance, where);
  s.gradient_tolerance = number_or(j, "gradient_tolerance", s.gradient_tolerance, where);
  s.initial_damping = number_or(j, "initial_damping", s.initial_damping, where);
  s.finite_difference_step = number_or(j, "finite_difference_step", s.finite_difference_step, where);
  return s;
}

// ---- streams ------------------------------------------------------------------

template <typename Record, typename ParseRecord>
std::vector<Record> parse_lines(std::istream& in, const char* format, ParseRecord parse_record) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    if (!have_header) {
      if (!j.contains("format") || j.at("format") != format) {
        throw ParseError(line_no, std::string("expected a header record with format \"") + format + "\"");
      }
      if (!j.contains("format_version") || !j.at("format_version").is_number_integer()) {
        throw ParseError(line_no, "header lacks an integer format_version");
      }
      if (j.at("format_version").get<int>() != kFormatVersion) {
        throw Error(ErrorCode::kVersionError, "line " + std::to_string(line_no) +
                                                  ": unsupported format_version " +
                                                  j.at("format_version").dump());
      }
      for (const auto& [key, _] : j.items()) {
        if (key != "format" && key != "format_version") {
          warn("line " + std::to_string(line_no) + ": ignoring unknown header field '" + key + "'");
        }
      }
      have_header = true;
      continue;
    }
    Record rec;
    try {
      rec = parse_record(j, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (!(rec.timestamp > last_t)) {
      throw Error(ErrorCode::kNonMonotoneTimestamp,
                  "line " + std::to_string(line_no) + ": timestamp " + format_double(rec.timestamp) +
                      " does not increase");
    }
    last_t = rec.timestamp;
    out.push_back(std::move(rec));
  }
  return out;
}

double record_number(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ParseError(line, std::string("field '") + key + "' is not a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(line, std::string("field '") + key + "' is not finite");
  return d;
}

template <int N>
Eigen::Matrix<double, N, 1> record_vec(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != static_cast<std::size_t>(N)) {
    throw ParseError(line, std::string("field '") + key + "' must hold " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!a[i].is_number() || !std::isfinite(a[i].get<double>())) {
      throw ParseError(line, std::string("field '") + key + "' has a non-numeric entry");
    }
    v[i] = a[i].get<double>();
  }
  return v;
}

Quaterniond record_quaternion(const json& j, const char* key, std::size_t line, const std::string& what) {
  const Eigen::Vector4d v = record_vec<4>(j, key, line);
  if (std::abs(v.norm() - 1.0) > kQuaternionTolerance) {
    throw ParseError(line, what + ": quaternion norm " + format_double(v.norm()) + " is not 1");
  }
  // Stored as read; the norm check above bounds the deviation.
  return Quaterniond(v[0], v[1], v[2], v[3]);
}

void warn_record_fields(const json& j, std::initializer_list<const char*> known, std::size_t line) {
  std::set<std::string> names(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!names.count(key)) warn("line " + std::to_string(line) + ": ignoring unknown field '" + key + "'");
  }
}

json quaternion_record(const Quaterniond& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

// ---- command log ----------------------------------------------------------------

void split_csv(const std::string& line, std::vector<std::string_view>& out) {
  out.clear();
  std::string_view s(line);
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warning_mutex);
  g_warning_handler = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(g_warning_mutex);
  if (g_warning_handler) {
    g_warning_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

// ---- hand ---------------------------------------------------------------------

std::string hand_geometry_to_json(const HandGeometry& g) {
  json j;
  j["format_version"] = kFormatVersion;
  for (int d = 0; d < kDigitCount; ++d) {
    const std::string name = digit_name(d);
    j["digits"][name] = finger_json(g.digits[d]);
    j["mounts"][name] = transform_json(g.mounts[d]);
    const auto& c = g.coupled_limits[d];
    j["coupled_limits"][name] = {{"enabled", c.enabled},
                                 {"abduction_half_range_rad", c.abduction_half_range},
                                 {"flexion_at_zero_rad", c.flexion_at_zero}};
  }
  j["palm_keypoints_m"] = json::array();
  for (const auto& [label, p] : g.palm_keypoints) {
    j["palm_keypoints_m"].push_back({{"label", label}, {"position_m", to_array(p)}});
  }
  return j.dump(2) + "\n";
}

HandGeometry hand_geometry_from_json(const std::string& text) {
  const json j = parse_json(text, "hand geometry");
  check_version(j, "hand");
  warn_unknown(j, {"format_version", "digits", "mounts", "coupled_limits", "palm_keypoints_m"}, "hand");
  HandGeometry g;
  const auto& digits = field(j, "digits", "hand");
  for (int d = 0; d < kDigitCount; ++d) {
    const std::string name = digit_name(d);
    g.digits[d] = finger_from_json(field(digits, name.c_str(), "hand.digits"), "hand.digits." + name);
    g.mounts[d] = Isometry3d::Identity();
    if (j.contains("mounts") && j.at("mounts").contains(name)) {
      g.mounts[d] = transform(j.at("mounts").at(name), "hand.mounts." + name);
    }
    if (j.contains("coupled_limits") && j.at("coupled_limits").contains(name)) {
      const auto& c = j.at("coupled_limits").at(name);
      const std::string where = "hand.coupled_limits." + name;
      warn_unknown(c, {"enabled", "abduction_half_range_rad", "flexion_at_zero_rad"}, where);
      if (!field(c, "enabled", where).is_boolean()) config_fail(where, "enabled must be a boolean");
      g.coupled_limits[d].enabled = c.at("enabled").get<bool>();
      g.coupled_limits[d].abduction_half_range =
          number_or(c, "abduction_half_range_rad", g.digits[d].q_limits[0].upper, where);
      g.coupled_limits[d].flexion_at_zero =
          number_or(c, "flexion_at_zero_rad", g.digits[d].q_limits[1].upper, where);
    }
  }
  for (const auto& [key, _] : digits.items()) {
    if (digit_from_name(key) < 0) warn("hand.digits: ignoring unknown digit '" + key + "'");
  }
  if (j.contains("palm_keypoints_m")) {
    const auto& palm = j.at("palm_keypoints_m");
    if (!palm.is_array()) config_fail("hand.palm_keypoints_m", "expected an array");
    for (const auto& p : palm) {
      const std::string where = "hand.palm_keypoints_m";
      const auto& label = field(p, "label", where);
      if (!label.is_string()) config_fail(where, "label must be a string");
      g.palm_keypoints.emplace_back(label.get<std::string>(), vec<3>(p, "position_m", where));
    }
  }
  try {
    g.validate();
  } catch (const Error& e) {
    config_fail("hand", e.what());
  }
  return g;
}

HandGeometry load_hand_geometry(const std::filesystem::path& path) {
  return hand_geometry_from_json(read_file(path));
}

void save_hand_geometry(const HandGeometry& g, const std::filesystem::path& path) {
  write_file(path, hand_geometry_to_json(g));
}

// ---- retarget -------------------------------------------------------------------

std::string retarget_config_to_json(const RetargetSetup& s) {
  const auto& c = s.config;
  json j;
  j["format_version"] = kFormatVersion;
  j["epsilon_m"] = c.epsilon;
  j["eta1_m"] = c.eta1;
  j["eta2_m"] = c.eta2;
  j["lambda_smooth"] = c.lambda_smooth;
  j["weight_s1"] = c.weight_s1;
  j["weight_s2"] = c.weight_s2;
  j["q_lower_rad"] = to_array(c.q_lower);
  j["q_upper_rad"] = to_array(c.q_upper);
  j["solver"] = solver_json(c.solver);
  j["glove_to_hand"] = transform_json(c.glove_to_hand);
  j["human_labels"] = c.human_labels;
  j["keyvectors"] = json::array();
  for (const auto& kv : s.spec) {
    j["keyvectors"].push_back({{"from", kv.from},
                               {"to", kv.to},
                               {"membership", to_string(kv.membership)},
                               {"beta", to_array(kv.beta)}});
  }
  return j.dump(2) + "\n";
}

RetargetSetup retarget_config_from_json(const std::string& text, const HandGeometry& g) {
  const json j = parse_json(text, "retarget config");
  const std::string where = "retarget";
  check_version(j, where);
  warn_unknown(j,
               {"format_version", "epsilon_m", "eta1_m", "eta2_m", "lambda_smooth", "weight_s1", "weight_s2",
                "q_lower_rad", "q_upper_rad", "solver", "glove_to_hand", "human_labels", "keyvectors"},
               where);
  RetargetSetup s;
  s.config = default_retarget_config(g);
  s.spec = default_keyvector_spec();
  auto& c = s.config;
  c.epsilon = number_or(j, "epsilon_m", c.epsilon, where);
  c.eta1 = number_or(j, "eta1_m", c.eta1, where);
  c.eta2 = number_or(j, "eta2_m", c.eta2, where);
  c.lambda_smooth = number_or(j, "lambda_smooth", c.lambda_smooth, where);
  c.weight_s1 = number_or(j, "weight_s1", c.weight_s1, where);
  c.weight_s2 = number_or(j, "weight_s2", c.weight_s2, where);
  if (j.contains("q_lower_rad")) c.q_lower = vec<kHandJointCount>(j, "q_lower_rad", where);
  if (j.contains("q_upper_rad")) c.q_upper = vec<kHandJointCount>(j, "q_upper_rad", where);
  if (j.contains("solver")) c.solver = solver_from(j.at("solver"), c.solver, where + ".solver");
  if (j.contains("glove_to_hand")) c.glove_to_hand = transform(j.at("glove_to_hand"), where + ".glove_to_hand");
  if (j.contains("human_labels")) {
    const auto& m = j.at("human_labels");
    if (!m.is_object()) config_fail(where + ".human_labels", "expected an object");
    for (const auto& [robot, human] : m.items()) {
      if (!human.is_string()) config_fail(where + ".human_labels", "labels must be strings");
      c.human_labels[robot] = human.get<std::string>();
    }
  }
  if (j.contains("keyvectors")) {
    const auto& list = j.at("keyvectors");
    if (!list.is_array() || list.size() != static_cast<std::size_t>(kKeyvectorCount)) {
      config_fail(where + ".keyvectors", "expected exactly " + std::to_string(kKeyvectorCount) + " entries");
    }
    for (int i = 0; i < kKeyvectorCount; ++i) {
      const auto& e = list[i];
      const std::string w = where + ".keyvectors[" + std::to_string(i) + "]";
      warn_unknown(e, {"from", "to", "membership", "beta"}, w);
      const auto& from = field(e, "from", w);
      const auto& to = field(e, "to", w);
      if (!from.is_string() || !to.is_string()) config_fail(w, "from/to must be strings");
      s.spec[i].from = from.get<std::string>();
      s.spec[i].to = to.get<std::string>();
      const auto& m = field(e, "membership", w);
      if (!m.is_string()) config_fail(w, "membership must be a string");
      s.spec[i].membership = membership_from(m.get<std::string>(), w);
      s.spec[i].beta = e.contains("beta") ? vec<3>(e, "beta", w) : Vector3d::Ones();
    }
  }
  c.validate();
  validate_keyvector_spec(s.spec, c.human_labels);
  return s;
}

RetargetSetup load_retarget_config(const std::filesystem::path& path, const HandGeometry& g) {
  return retarget_config_from_json(read_file(path), g);
}

// ---- arm -----------------------------------------------------------------------

std::string arm_config_to_json(const ArmSetup& s) {
  const auto& m = s.model;
  const auto& c = s.ik;
  json j;
  j["format_version"] = kFormatVersion;
  json model;
  model["dh_a_m"] = m.a;
  model["dh_d_m"] = m.d;
  model["dh_alpha_rad"] = m.alpha;
  model["q_lower_rad"] = to_array(m.q_lower);
  model["q_upper_rad"] = to_array(m.q_upper);
  model["velocity_limit_rad_s"] = to_array(m.velocity_limit);
  model["tool"] = transform_json(m.tool);
  model["shoulder_joint"] = m.shoulder_joint;
  model["elbow_joint"] = m.elbow_joint;
  model["wrist_joint"] = m.wrist_joint;
  j["model"] = model;
  j["ik"] = {{"lambda_scale", c.lambda_scale},
             {"w0", to_array(c.w0)},
             {"w1", c.w1},
             {"w2", c.w2},
             {"w3", c.w3},
             {"dt_s", c.dt},
             {"velocity_damper_margin_rad", c.velocity_damper_margin},
             {"damper_gain", c.damper_gain},
             {"vertical", to_array(c.vertical)}};
  j["q_start_rad"] = to_array(s.q_start);
  return j.dump(2) + "\n";
}

ArmSetup arm_config_from_json(const std::string& text) {
  const json j = parse_json(text, "arm config");
  check_version(j, "arm");
  warn_unknown(j, {"format_version", "model", "ik", "q_start_rad"}, "arm");
  ArmSetup s;
  s.model = reference_arm();
  s.q_start = reference_arm_home();
  if (j.contains("model")) {
    const auto& m = j.at("model");
    const std::string w = "arm.model";
    warn_unknown(m, {"dh_a_m", "dh_d_m", "dh_alpha_rad", "q_lower_rad", "q_upper_rad", "velocity_limit_rad_s",
                     "tool", "shoulder_joint", "elbow_joint", "wrist_joint"},
                 w);
    auto seven = [&](const char* key, std::array<double, kArmJoints>& out) {
      if (!m.contains(key)) return;
      const Vector7d v = vec<kArmJoints>(m, key, w);
      for (int i = 0; i < kArmJoints; ++i) out[i] = v[i];
    };
    seven("dh_a_m", s.model.a);
    seven("dh_d_m", s.model.d);
    seven("dh_alpha_rad", s.model.alpha);
    if (m.contains("q_lower_rad")) s.model.q_lower = vec<kArmJoints>(m, "q_lower_rad", w);
    if (m.contains("q_upper_rad")) s.model.q_upper = vec<kArmJoints>(m, "q_upper_rad", w);
    if (m.contains("velocity_limit_rad_s")) s.model.velocity_limit = vec<kArmJoints>(m, "velocity_limit_rad_s", w);
    if (m.contains("tool")) s.model.tool = transform(m.at("tool"), w + ".tool");
    auto index = [&](const char* key, int& out) {
      if (!m.contains(key)) return;
      if (!m.at(key).is_number_integer()) config_fail(w, std::string(key) + " must be an integer");
      out = m.at(key).get<int>();
    };
    index("shoulder_joint", s.model.shoulder_joint);
    index("elbow_joint", s.model.elbow_joint);
    index("wrist_joint", s.model.wrist_joint);
  }
  if (j.contains("ik")) {
    const auto& c = j.at("ik");
    const std::string w = "arm.ik";
    warn_unknown(c, {"lambda_scale", "w0", "w1", "w2", "w3", "dt_s", "velocity_damper_margin_rad", "damper_gain",
                     "vertical"},
                 w);
    s.ik.lambda_scale = number_or(c, "lambda_scale", s.ik.lambda_scale, w);
    if (c.contains("w0")) {
      // A scalar applies to all six rows.
      s.ik.w0 = c.at("w0").is_number() ? Vector6d::Constant(number(c.at("w0"), w + ".w0"))
                                       : vec<6>(c, "w0", w);
    }
    s.ik.w1 = number_or(c, "w1", s.ik.w1, w);
    s.ik.w2 = number_or(c, "w2", s.ik.w2, w);
    s.ik.w3 = number_or(c, "w3", s.ik.w3, w);
    s.ik.dt = number_or(c, "dt_s", s.ik.dt, w);
    s.ik.velocity_damper_margin = number_or(c, "velocity_damper_margin_rad", s.ik.velocity_damper_margin, w);
    s.ik.damper_gain = number_or(c, "damper_gain", s.ik.damper_gain, w);
    if (c.contains("vertical")) s.ik.vertical = vec<3>(c, "vertical", w);
  }
  if (j.contains("q_start_rad")) s.q_start = vec<kArmJoints>(j, "q_start_rad", "arm");
  s.model.validate();
  s.ik.validate();
  if ((s.q_start.array() < s.model.q_lower.array()).any() || (s.q_start.array() > s.model.q_upper.array()).any()) {
    config_fail("arm", "q_start_rad lies outside the joint limits");
  }
  return s;
}

ArmSetup load_arm_config(const std::filesystem::path& path) { return arm_config_from_json(read_file(path)); }

// ---- glove / wrist streams ---------------------------------------------------------

std::vector<HumanHandFrame> parse_glove_stream(std::istream& in) {
  return parse_lines<HumanHandFrame>(in, kGloveFormat, [](const json& j, std::size_t line) {
    warn_record_fields(j, {"t_s", "landmarks"}, line);
    HumanHandFrame f;
    f.timestamp = record_number(j, "t_s", line);
    if (!j.contains("landmarks") || !j.at("landmarks").is_array()) {
      throw ParseError(line, "missing landmarks array");
    }
    const auto& list = j.at("landmarks");
    if (list.size() != static_cast<std::size_t>(kLandmarkCount)) {
      throw ParseError(line, "expected " + std::to_string(kLandmarkCount) + " landmarks, found " +
                                 std::to_string(list.size()));
    }
    std::array<bool, kLandmarkCount> seen{};
    for (const auto& lm : list) {
      if (!lm.is_object() || !lm.contains("label") || !lm.at("label").is_string()) {
        throw ParseError(line, "landmark without a label");
      }
      const std::string label = lm.at("label").get<std::string>();
      const int idx = landmark_index(label);
      if (idx < 0) throw ParseError(line, "unknown landmark label '" + label + "'");
      if (seen[idx]) throw ParseError(line, "duplicate landmark '" + label + "'");
      seen[idx] = true;
      f.landmarks[idx].position = record_vec<3>(lm, "p_m", line);
      f.landmarks[idx].orientation = record_quaternion(lm, "q_wxyz", line, "landmark " + label);
    }
    return f;
  });
}

std::vector<HumanHandFrame> parse_glove_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return parse_glove_stream(in);
}

void write_glove_stream(std::ostream& out, const std::vector<HumanHandFrame>& frames) {
  out << json{{"format", kGloveFormat}, {"format_version", kFormatVersion}}.dump() << '\n';
  const auto& labels = landmark_labels();
  for (const auto& f : frames) {
    json j;
    j["t_s"] = f.timestamp;
    j["landmarks"] = json::array();
    for (int i = 0; i < kLandmarkCount; ++i) {
      j["landmarks"].push_back({{"label", labels[i]},
                                {"p_m", to_array(f.landmarks[i].position)},
                                {"q_wxyz", quaternion_record(f.landmarks[i].orientation)}});
    }
    out << j.dump() << '\n';
  }
}

std::vector<WristRecord> parse_wrist_stream(std::istream& in) {
  auto records = parse_lines<WristRecord>(in, kWristFormat, [](const json& j, std::size_t line) {
    warn_record_fields(j, {"t_s", "p_m", "q_wxyz"}, line);
    WristRecord r;
    r.timestamp = record_number(j, "t_s", line);
    r.pose = Isometry3d::Identity();
    r.pose.linear() = record_quaternion(j, "q_wxyz", line, "wrist pose").normalized().toRotationMatrix();
    r.pose.translation() = record_vec<3>(j, "p_m", line);
    return r;
  });
  if (!records.empty()) {
    const auto& first = records.front().pose;
    if (first.translation().norm() > 1e-9 ||
        (first.linear() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
      throw Error(ErrorCode::kParseError, "wrist stream: the first pose must be the identity (poses are relative)");
    }
  }
  return records;
}

std::vector<WristRecord> parse_wrist_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return parse_wrist_stream(in);
}

void write_wrist_stream(std::ostream& out, const std::vector<WristRecord>& records) {
  out << json{{"format", kWristFormat}, {"format_version", kFormatVersion}}.dump() << '\n';
  for (const auto& r : records) {
    const Quaterniond q(r.pose.linear());
    out << json{{"t_s", r.timestamp}, {"p_m", to_array(r.pose.translation())}, {"q_wxyz", quaternion_record(q)}}.dump()
        << '\n';
  }
}

// ---- command log -----------------------------------------------------------------

std::vector<std::string> command_log_columns() {
  std::vector<std::string> c = {"tick", "t_s", "flags"};
  for (int d = 0; d < kDigitCount; ++d)
    for (int j = 1; j <= 4; ++j) c.push_back("q_" + std::string(digit_name(d)) + "_" + std::to_string(j) + "_rad");
  for (int d = 0; d < kDigitCount; ++d)
    for (int j = 1; j <= 3; ++j) c.push_back("d_" + std::string(digit_name(d)) + "_" + std::to_string(j) + "_m");
  for (int j = 1; j <= kArmJoints; ++j) c.push_back("q_arm_" + std::to_string(j) + "_rad");
  for (int j = 1; j <= kArmJoints; ++j) c.push_back("qd_arm_" + std::to_string(j) + "_rad_s");
  for (const char* s : {"retarget_us", "hand_ik_us", "arm_us", "tick_us"}) c.emplace_back(s);
  return c;
}

void write_command_log(std::ostream& out, const CommandLog& log) {
  out << kLogBanner << kFormatVersion << '\n';
  const auto cols = command_log_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::string line;
  for (const auto& r : log.rows) {
    line.clear();
    line += std::to_string(r.tick);
    line += ',';
    line += format_double(r.timestamp);
    line += ',';
    line += std::to_string(r.flags);
    auto put = [&](double v) {
      line += ',';
      line += format_double(v);
    };
    for (int i = 0; i < kHandJointCount; ++i) put(r.q_hand[i]);
    for (int i = 0; i < kHandActuatorCount; ++i) put(r.d_hand[i]);
    for (int i = 0; i < kArmJoints; ++i) put(r.q_arm[i]);
    for (int i = 0; i < kArmJoints; ++i) put(r.q_dot_arm[i]);
    for (double v : {r.retarget_us, r.hand_ik_us, r.arm_us, r.tick_us}) put(v);
    out << line << '\n';
  }
}

void write_command_log(const CommandLog& log, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_command_log(ss, log);
  write_file(path, ss.str());
}

CommandLog parse_command_log(std::istream& in) {
  CommandLog log;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty command log (missing version line)");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string banner = kLogBanner;
  if (line.rfind(banner, 0) != 0) throw ParseError(line_no, "not a command log (bad version line)");
  const std::string version = line.substr(banner.size());
  if (version != std::to_string(kFormatVersion)) {
    throw Error(ErrorCode::kVersionError, "line 1: unsupported command log format_version " + version);
  }

  if (!std::getline(in, line)) throw ParseError(2, "missing header row");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string_view> fields;
  split_csv(line, fields);
  const auto cols = command_log_columns();
  if (fields.size() < cols.size()) throw ParseError(line_no, "header row has too few columns");
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (fields[i] != cols[i]) {
      throw ParseError(line_no, "unexpected column '" + std::string(fields[i]) + "', expected '" + cols[i] + "'");
    }
  }
  const std::size_t width = fields.size();
  if (width > cols.size()) {
    warn("command log: ignoring " + std::to_string(width - cols.size()) + " unknown trailing column(s)");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_csv(line, fields);
    if (fields.size() != width) {
      throw ParseError(line_no, "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    CommandRow r;
    std::size_t k = 0;
    try {
      auto integer = [&](std::string_view s, auto& out) {
        const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
          throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
        }
      };
      integer(fields[k++], r.tick);
      r.timestamp = parse_double(fields[k++]);
      integer(fields[k++], r.flags);
      for (int i = 0; i < kHandJointCount; ++i) r.q_hand[i] = parse_double(fields[k++]);
      for (int i = 0; i < kHandActuatorCount; ++i) r.d_hand[i] = parse_double(fields[k++]);
      for (int i = 0; i < kArmJoints; ++i) r.q_arm[i] = parse_double(fields[k++]);
      for (int i = 0; i < kArmJoints; ++i) r.q_dot_arm[i] = parse_double(fields[k++]);
      r.retarget_us = parse_double(fields[k++]);
      r.hand_ik_us = parse_double(fields[k++]);
      r.arm_us = parse_double(fields[k++]);
      r.tick_us = parse_double(fields[k++]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, "column " + cols[k - 1] + ": " + e.what());
    }
    if (!log.rows.empty() && !(r.timestamp > log.rows.back().timestamp)) {
      throw Error(ErrorCode::kNonMonotoneTimestamp, "line " + std::to_string(line_no) + ": timestamp does not increase");
    }
    log.rows.push_back(r);
  }
  return log;
}

CommandLog parse_command_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return parse_command_log(in);
}

}  // namespace dexkin::io
