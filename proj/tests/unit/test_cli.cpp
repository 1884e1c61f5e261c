// Exit statuses and output of the command-line tool, run as a child process.

#include "fixtures.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using testing_support::source_path;

namespace {

struct Run {
  int status;
  std::string out;
};

Run run(const std::string& args) {
  const auto out = std::filesystem::temp_directory_path() / "dexkin_cli_test.out";
  const std::string cmd =
      std::string(DEXKIN_CLI) + " " + args + " > " + out.string() + " 2> " + out.string() + ".err";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, s.str()};
}

std::string src(const std::string& rel) { return source_path(rel).string(); }

}  // namespace

TEST_CASE("cli: help and usage errors") {
  CHECK(run("--help").status == 0);
  CHECK(run("fk --bogus").status == 64);
  CHECK(run("").status == 64);
  CHECK(run("fk --digit toe --d 0,0,0").status == 64);
  CHECK(run("fk --d 0,0").status == 64);
}

TEST_CASE("cli: fk and ik") {
  const Run fk = run("fk --digit index --d 0,0,0");
  CHECK(fk.status == 0);
  CHECK(fk.out.rfind("digit,", 0) == 0);
  const Run ik = run("--format json-lines ik --digit middle --q 0.1,0.5,0.4");
  CHECK(ik.status == 0);
  CHECK(ik.out.find("\"d1_m\"") != std::string::npos);
  // Past the end of actuator travel.
  CHECK(run("fk --digit thumb --d 0.01,0,0").status == 5);
  CHECK(run("validate-geometry").status == 0);
}

TEST_CASE("cli: replay writes the golden log") {
  const auto out = std::filesystem::temp_directory_path() / "dexkin_cli_replay.csv";
  const Run r = run("replay " + src("fixtures/pinch_session.json") + " --out " + out.string());
  CHECK(r.status == 0);
  CHECK(r.out.find("hand held 0") != std::string::npos);
  std::ifstream a(out), b(source_path("fixtures/pinch_golden.csv"));
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(run("replay " + src("fixtures/pinch_session.json") + " --threads 3 --out " + out.string()).status == 0);
  std::ifstream c(out);
  std::stringstream sc;
  sc << c.rdbuf();
  CHECK(sc.str() == sb.str());
}

TEST_CASE("cli: input errors map to exit status 2") {
  CHECK(run("replay /nonexistent/session.json").status == 2);
  CHECK(run("distances --glove " + src("fixtures/bad_quaternion.jsonl")).status == 2);
  CHECK(run("distances --log " + src("fixtures/bad_version_log.csv")).status == 2);
}

TEST_CASE("cli: distances") {
  const Run d = run("distances --log " + src("fixtures/pinch_golden.csv") + " --glove " +
                    src("fixtures/pinch_glove.jsonl") + " --retarget " + src("config/retarget_default.json") +
                    " --pairs thumb_tip:index_tip");
  CHECK(d.status == 0);
  CHECK(d.out.rfind("t_s,thumb_tip-index_tip_human_m,thumb_tip-index_tip_robot_m\n", 0) == 0);
  CHECK(run("distances --log " + src("fixtures/pinch_golden.csv") + " --pairs thumb_tip:elbow").status == 3);
}
