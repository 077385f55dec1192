// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdt/harness.hpp"

#include "temp_dir.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sdt {
namespace {

namespace fs = std::filesystem;
using test::TempDir;

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + SDT_CLI_PATH + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const nlohmann::json gen = {
        {"generator",
         {{"num_classes", 4}, {"min_frames", 40}, {"max_frames", 80}, {"min_actions", 3}, {"max_actions", 4},
          {"min_duration", 10}, {"max_duration", 20}}},
        {"counts", {{"train_source", 4}, {"adapt_pair", 3}, {"test_target", 3}}}};
    write(dir_.path() / "gen.json", gen.dump());
    ASSERT_EQ(run_cli("synth-gen --config " + (dir_.path() / "gen.json").string() + " --seed 5 --out " +
                      (dir_.path() / "corpus").string()),
              0);
    const nlohmann::json exp = {{"manifest", "corpus/manifest.json"},
                                {"model", {{"hidden_dim", 8}, {"num_levels", 3}}},
                                {"train", {{"max_epochs", 4}, {"patience", 4}}},
                                {"distill", {{"tas", {{"max_epochs", 2}, {"patience", 2}}}}},
                                {"seeds", {1, 2}}};
    write(dir_.path() / "exp.json", exp.dump());
  }

  std::string cfg() const { return (dir_.path() / "exp.json").string(); }
  fs::path out(const std::string& name) const { return dir_.path() / name; }

  TempDir dir_{"cli"};
};

TEST_F(CliTest, SynthGenWritesManifestAndSummary) {
  EXPECT_TRUE(fs::exists(out("corpus") / "manifest.json"));
  EXPECT_EQ(slurp(out("corpus") / "table.csv").substr(0, 22), "role,recordings,frames");
  const auto m = load_manifest(out("corpus") / "manifest.json");
  EXPECT_EQ(m.num_classes, 4);
  EXPECT_EQ(m.with_role(Role::AdaptPair).size(), 3u);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  ASSERT_EQ(run_cli("distill --config " + cfg() + " --seed 3 --out " + out("a").string()), 0);
  ASSERT_EQ(run_cli("distill --config " + cfg() + " --seed 3 --out " + out("b").string(), "SDT_THREADS=1"), 0);
  for (const char* f : {"result.json", "table.csv", "log.jsonl"}) EXPECT_EQ(slurp(out("a") / f), slurp(out("b") / f)) << f;
  EXPECT_TRUE(fs::exists(out("a") / "checkpoints" / "teacher_seed3.sdtc"));
  EXPECT_TRUE(fs::exists(out("a") / "timing.json"));
  const auto rows = load_result_rows(out("a") / "result.json");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, "no_adaptation");
  EXPECT_EQ(rows[1].label, "distill");
  EXPECT_EQ(rows[1].seeds, std::vector<std::uint64_t>{3});
}

TEST_F(CliTest, ReportMergesResults) {
  ASSERT_EQ(run_cli("train-teacher --config " + cfg() + " --out " + out("t").string()), 0);
  ASSERT_EQ(run_cli("eval --config " + cfg() + " --out " + out("e").string()), 0);
  write(dir_.path() / "report.json", R"({"inputs": ["t/result.json", "e/result.json"]})");
  ASSERT_EQ(run_cli("report --config " + (dir_.path() / "report.json").string() + " --out " + out("r").string()), 0);
  const auto rows = load_result_rows(out("r") / "result.json");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].label, "oracle_source");
  EXPECT_EQ(rows[1].label, "distill");
}

nlohmann::json error_record(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "error.json")); }

TEST_F(CliTest, MalformedConfigIsAFormatError) {
  write(dir_.path() / "bad.json", "{\"seeds\": [1,");
  EXPECT_EQ(run_cli("eval --config " + (dir_.path() / "bad.json").string() + " --out " + out("x").string()), 3);
  const auto e = error_record(out("x"));
  EXPECT_EQ(e["error"]["type"], "format_error");
  EXPECT_TRUE(e["error"].contains("offset"));
}

TEST_F(CliTest, InvalidConfigIsReported) {
  write(dir_.path() / "bad.json", R"({"manifest": "corpus/manifest.json", "task": "finetune"})");
  EXPECT_EQ(run_cli("eval --config " + (dir_.path() / "bad.json").string() + " --out " + out("y").string()), 2);
  EXPECT_EQ(error_record(out("y"))["error"]["type"], "invalid_argument");
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli("distill --config " + (dir_.path() / "absent.json").string() + " --out " + out("z").string()), 2);
  EXPECT_EQ(error_record(out("z"))["error"]["type"], "usage");
  EXPECT_EQ(run_cli("distill --config " + cfg()), 2);
  EXPECT_EQ(run_cli("no-such-command --out " + out("w").string()), 2);
}

TEST_F(CliTest, MissingCorpusFileIsReported) {
  fs::remove(out("corpus") / "features" / "test000_ego.ftsq");
  EXPECT_NE(run_cli("eval --config " + cfg() + " --out " + out("m").string()), 0);
  EXPECT_TRUE(error_record(out("m"))["error"].contains("message"));
}

}  // namespace
}  // namespace sdt
