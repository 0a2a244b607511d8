#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "helpers.hpp"

TEST_SUITE_BEGIN("cli");

namespace {

struct RunResult {
  int status = -1;
  std::string output;  // stdout and stderr
};

RunResult run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" UMTPARA_CLI "' " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::size_t count_rows(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.empty() ? 0 : 1;
  return n;
}

void three_line_setup(const testing::TempDir& dir, const std::string& extra = "") {
  testing::write_text(dir / "corpus.txt", "the cat sat\nthe dog ran\nbirds fly high\n");
  testing::write_text(dir / "run.ini",
                      "[run]\nout = out\n[corpus]\npath = corpus.txt\nmin_count = 1\n[clustering]\nk = 2\n" + extra);
}

}  // namespace

TEST_CASE("cluster on a three-line corpus") {
  testing::TempDir dir;
  three_line_setup(dir);
  const auto r = run_cli("cluster --config " + q(dir / "run.ini"));
  INFO(r.output);
  CHECK(r.status == 0);
  CHECK(count_rows(dir / "out" / "assignments.tsv") == 3);
  CHECK(std::filesystem::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("unknown filter predicate") {
  testing::TempDir dir;
  three_line_setup(dir, "[filter]\nfilters = identity, sparkle\n");
  const auto r = run_cli("filter --config " + q(dir / "run.ini"));
  CHECK(r.status == 2);
  CHECK(r.output.find("sparkle") != std::string::npos);
  CHECK(r.output.find("filter.filters") != std::string::npos);
}

TEST_CASE("config errors exit 2 with the field path") {
  testing::TempDir dir;
  three_line_setup(dir, "[umt]\nsteps = lots\n");
  auto r = run_cli("cluster --config " + q(dir / "run.ini"));
  CHECK(r.status == 2);
  CHECK(r.output.find("umt.steps") != std::string::npos);

  r = run_cli("cluster --config " + q(dir / "absent.ini"));
  CHECK(r.status == 2);
  r = run_cli("teleport --config " + q(dir / "run.ini"));
  CHECK(r.status == 2);
  r = run_cli("cluster");
  CHECK(r.status == 2);
}

TEST_CASE("missing upstream artifact exits 3 naming the stage") {
  testing::TempDir dir;
  three_line_setup(dir);
  const auto r = run_cli("pair --config " + q(dir / "run.ini"));
  CHECK(r.status == 3);
  CHECK(r.output.find("'cluster'") != std::string::npos);
}

TEST_CASE("runtime failures exit 4") {
  testing::TempDir dir;
  three_line_setup(dir);
  testing::write_text(dir / "corpus.txt", "\n\n");
  const auto r = run_cli("cluster --config " + q(dir / "run.ini"));
  CHECK(r.status == 4);
}

TEST_CASE("output directory precedence") {
  testing::TempDir dir;
  three_line_setup(dir);
  auto r = run_cli("cluster --config " + q(dir / "run.ini"), "UMTPARA_OUT=" + q(dir / "env_out"));
  CHECK(r.status == 0);
  CHECK(std::filesystem::exists(dir / "env_out" / "assignments.tsv"));
  CHECK_FALSE(std::filesystem::exists(dir / "out"));

  r = run_cli("cluster --config " + q(dir / "run.ini") + " --out " + q(dir / "flag_out"),
              "UMTPARA_OUT=" + q(dir / "env_out2"));
  CHECK(r.status == 0);
  CHECK(std::filesystem::exists(dir / "flag_out" / "assignments.tsv"));
  CHECK_FALSE(std::filesystem::exists(dir / "env_out2"));
}

TEST_CASE("seed flag reaches the manifest") {
  testing::TempDir dir;
  three_line_setup(dir);
  const auto r = run_cli("cluster --config " + q(dir / "run.ini") + " --seed 991");
  CHECK(r.status == 0);
  std::ifstream in(dir / "out" / "manifest.json");
  std::ostringstream os;
  os << in.rdbuf();
  CHECK(os.str().find("991") != std::string::npos);
}

TEST_SUITE_END();
