// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "support/temp_dir.hpp"

using tse::testing::TempDir;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(TSELAB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("exit codes") {
  TempDir dir;
  const std::string d = dir.path().string();
  CHECK(run("--help") == 0);
  CHECK(run("") == 1);
  CHECK(run("synth") == 1);
  CHECK(run("synth --out " + d + "/c --bogus 3") == 1);
  CHECK(run("synth --speakers 1 --out " + d + "/c") == 1);
  CHECK(run("synth --speakers 3 --utts 3 --dur 0.3 --out " + d + "/c") == 0);
  CHECK(run("mix --corpus " + d + "/missing --out " + d + "/m") == 2);
  CHECK(run("mix --corpus " + d + "/c --out " + d + "/m --split-ratios 0.5,0.5,0.5") == 1);
  CHECK(run("mix --corpus " + d + "/c --out " + d +
            "/m --train-speakers spk00,spk01 --test-speakers spk01,spk02 --mixtures 1,0,1") ==
        2);
  CHECK(run("gradcheck --instances 2") == 0);
  CHECK(run("gradcheck --instances 2 --inject-fault exp") == 3);
}

TEST_CASE("config files set values, flags override, unknown keys fail") {
  TempDir dir;
  const std::string d = dir.path().string();
  {
    std::ofstream ini(dir / "run.ini");
    ini << "[synth]\nspeakers = 3\nutts = 2\ndur = 0.3\nseed = 5\n";
  }
  REQUIRE(run("--config " + d + "/run.ini synth --seed 6 --out " + d + "/c") == 0);
  std::ifstream report(dir / "c" / "report.json");
  std::string text((std::istreambuf_iterator<char>(report)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"speakers\": 3") != std::string::npos);
  CHECK(text.find("\"seed\": 6") != std::string::npos);
  CHECK(text.find("\"version\"") != std::string::npos);
  {
    std::ofstream ini(dir / "bad.ini");
    ini << "[synth]\nspeakerz = 3\n";
  }
  CHECK(run("--config " + d + "/bad.ini synth --out " + d + "/c2") == 1);
}
