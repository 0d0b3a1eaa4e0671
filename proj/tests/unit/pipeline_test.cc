// Copyright 2026 The NIRec Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>

#include <gtest/gtest.h>
#include "json.hpp"

#include "nirec/checksum.h"
#include "nirec/evalx.h"
#include "nirec/pipeline.h"
#include "test_util.h"

namespace nirec {
namespace {

using testing::ReadFile;
using testing::TempDir;
using testing::WriteFile;

// Small enough to run every stage in a few seconds.
std::string TinyJson(const std::filesystem::path& out) {
  nlohmann::json j = {
      {"seed", 3},
      {"out_dir", out.string()},
      {"data",
       {{"synthetic", true},
        {"k_core", 3},
        {"synth",
         {{"n_users", 150}, {"n_items", 60}, {"n_communities", 4},
          {"ratings_per_user", 20}, {"mean_out_degree", 5}}}}},
      {"simulation",
       {{"betas", {10}},
        {"rating_mf", {{"dim", 4}, {"epochs", 15}}},
        {"sim_mf", {{"dim", 4}, {"epochs", 10}}},
        {"reference_levels", {0.4, 0.2, 0.2, 0.1, 0.1}}}},
      {"targets", {{"group_sizes", {1, 3}}, {"thresholds", {1}}, {"n_items", 3}}},
      {"training",
       {{"estimator", {{"dim", 4}, {"epochs", 4}}},
        {"backbone", {{"dim", 4}, {"epochs", 4}}},
        {"experience", {{"dim", 4}, {"epochs", 4}}},
        {"gradcheck_coords", 20}}},
      {"steering", {{"k", 10}, {"gammas", {0, 0.5}}}},
      {"evaluation", {{"adjustment", true}, {"adjust_fraction", 0.34}}}};
  return j.dump();
}

RunConfig Tiny(const std::filesystem::path& out) {
  return ParseRunConfig(TinyJson(out));
}

std::map<std::string, std::string> SteerOutputs(const RunConfig& c) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(c.out_dir)) {
    const auto rel = std::filesystem::relative(e.path(), c.out_dir).string();
    if (e.is_regular_file() && e.path().extension() == ".csv" &&
        rel.find("timing") == std::string::npos) {
      out[rel] = ReadFile(e.path());
    }
  }
  return out;
}

TEST(Config, DefaultsAndOverrides) {
  const auto d = ParseRunConfig("{}");
  EXPECT_EQ(d.top_k, 10);
  EXPECT_EQ(d.gammas.size(), 21u);
  EXPECT_EQ(d.betas, std::vector<double>{10.0});
  const auto c = ParseRunConfig(
      R"({"seed": 9, "steering": {"gamma_grid": {"lo": 0, "hi": 1, "step": 0.5},
          "methods": ["NIRec", "Oracle"]}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.gammas, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::kNIRec, Method::kOracle}));
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(ParseRunConfig(R"({"sed": 1})"), InputError);
  EXPECT_THROW(ParseRunConfig(R"({"steering": {"k": 0}})"), InputError);
  EXPECT_THROW(ParseRunConfig(R"({"steering": {"methods": ["DiffNet"]}})"), InputError);
  EXPECT_THROW(ParseRunConfig("{not json"), InputError);
  EXPECT_THROW(LoadRunConfig("/nonexistent/config.json"), InputError);
}

TEST(Config, EchoRoundTrips) {
  TempDir dir;
  const auto c = Tiny(dir.path());
  const auto echo = RunConfigToJson(c);
  EXPECT_EQ(RunConfigToJson(ParseRunConfig(echo)), echo);
}

TEST(Config, StageHashesTrackUpstreamSections) {
  TempDir dir;
  auto a = Tiny(dir.path());
  auto b = a;
  b.gammas = {0.0};
  EXPECT_EQ(StageConfigHash(a, Stage::kTrain), StageConfigHash(b, Stage::kTrain));
  EXPECT_NE(StageConfigHash(a, Stage::kSteer), StageConfigHash(b, Stage::kSteer));
  b = a;
  b.seed = 4;
  EXPECT_NE(StageConfigHash(a, Stage::kPrepare), StageConfigHash(b, Stage::kPrepare));
  b = a;
  b.out_dir = "/elsewhere";
  EXPECT_EQ(StageConfigHash(a, Stage::kReport), StageConfigHash(b, Stage::kReport));
}

TEST(LevelHistogram, PutsMassOnRatingBins) {
  const std::vector<double> lv{1, 1, 2, 0, 0};
  const auto h = LevelHistogram(lv);
  ASSERT_EQ(h.size(), static_cast<std::size_t>(kRatingHistogramBins));
  EXPECT_DOUBLE_EQ(h.front(), 0.25);
  EXPECT_DOUBLE_EQ(h.back(), 0.0);
  double total = 0;
  for (double x : h) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Checksum, KnownVector) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

class PipelineTest : public ::testing::Test {
 protected:
  TempDir dir_;
};

TEST_F(PipelineTest, FullRunProducesOneRowPerSpecMethodGamma) {
  auto c = Tiny(dir_ / "run");
  c.gammas = {0.0};
  c.adjustment = false;
  CmdAll(c);
  const RunLayout lay{c.out_dir};
  for (int g : c.group_sizes) {
    const auto specs = LoadTargetSpecs(lay.TargetsFile(g, 1.0));
    const auto rows = ParseSweepCsv(ReadFile(lay.SweepFile(10.0, g, 1.0)));
    EXPECT_EQ(rows.size(), specs.size() * c.methods.size());
    std::set<std::pair<std::size_t, std::string>> keys;
    for (const auto& r : rows) {
      EXPECT_TRUE(keys.insert({r.spec_id, r.method}).second);
      EXPECT_EQ(r.gamma, 0.0);
      EXPECT_EQ(r.bits.size(), specs[r.spec_id].neighbor_users.size());
      EXPECT_GE(r.dtne, 0.0);
    }
  }
  EXPECT_TRUE(std::filesystem::exists(lay.CurvesFile()));
  EXPECT_TRUE(std::filesystem::exists(lay.PlotFile(1, 10.0, 1.0)));
  const auto curves = ParseCurveCsv(ReadFile(lay.CurvesFile()));
  EXPECT_EQ(curves.size(), c.methods.size() * c.group_sizes.size());
}

TEST_F(PipelineTest, DeterministicAcrossWorkerCounts) {
  auto a = Tiny(dir_ / "a");
  auto b = Tiny(dir_ / "b");
  CmdAll(a, {.workers = 1});
  CmdAll(b, {.workers = 4});
  const auto oa = SteerOutputs(a), ob = SteerOutputs(b);
  ASSERT_FALSE(oa.empty());
  EXPECT_EQ(oa, ob);
}

TEST_F(PipelineTest, InterruptedSteerResumesToSameBytes) {
  auto full = Tiny(dir_ / "full");
  CmdAll(full);
  auto part = Tiny(dir_ / "part");
  CmdPrepare(part);
  CmdSimulate(part);
  CmdTrain(part);
  int calls = 0;
  while (!CmdSteer(part, {.workers = 2, .max_specs = 2})) {
    ASSERT_LT(++calls, 50);
  }
  EXPECT_GT(calls, 0);
  CmdReport(part);
  EXPECT_EQ(SteerOutputs(full), SteerOutputs(part));
}

TEST_F(PipelineTest, StaleOrTamperedStagesAreRejected) {
  auto c = Tiny(dir_ / "run");
  CmdPrepare(c);
  CmdSimulate(c);
  // A changed simulation section invalidates simulate and everything after.
  auto changed = c;
  changed.betas = {5.0};
  EXPECT_THROW(CmdTrain(changed), InputError);
  EXPECT_NO_THROW(CmdTrain(c));
  // Edited artifact bytes fail the checksum.
  const RunLayout lay{c.out_dir};
  WriteFile(lay.OracleFile(), ReadFile(lay.OracleFile()) + " ");
  EXPECT_THROW(CmdSteer(c), InputError);
  // Rerunning the upstream stage repairs the chain.
  CmdSimulate(c);
  CmdTrain(c);
  EXPECT_TRUE(CmdSteer(c));
}

TEST_F(PipelineTest, MissingInputsAreInputErrors) {
  auto c = ParseRunConfig("{}");
  c.out_dir = dir_ / "x";
  c.ratings_path = dir_ / "none.txt";
  c.trust_path = dir_ / "none2.txt";
  EXPECT_THROW(CmdPrepare(c), InputError);
  EXPECT_THROW(CmdSimulate(c), InputError);
}

bool CliBuilt() { return std::string(NIREC_CLI_PATH) != "false"; }

int RunCli(const std::string& args) {
  const std::string cmd = std::string(NIREC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(PipelineTest, CliExitCodes) {
  if (!CliBuilt()) GTEST_SKIP() << "command-line tool not built";
  EXPECT_EQ(RunCli("prepare --config " + (dir_ / "missing.json").string()), 2);
  EXPECT_EQ(RunCli("prepare --bogus"), 2);
  EXPECT_EQ(RunCli("steer --workers 0"), 2);
  EXPECT_EQ(RunCli("--help"), 0);
  WriteFile(dir_ / "bad.json", R"({"data": {"ratings": "/nonexistent/r.txt",
                                           "trust": "/nonexistent/t.txt"}})");
  EXPECT_EQ(RunCli("prepare --config " + (dir_ / "bad.json").string() +
                   " --out " + (dir_ / "o").string()),
            2);
  WriteFile(dir_ / "tiny.json", TinyJson(dir_ / "cli"));
  EXPECT_EQ(RunCli("prepare --config " + (dir_ / "tiny.json").string()), 0);
  EXPECT_EQ(RunCli("train --config " + (dir_ / "tiny.json").string()), 2);
  // Divergent estimator training maps to exit 3.
  nlohmann::json j = nlohmann::json::parse(TinyJson(dir_ / "div"));
  j["simulation"]["rating_mf"]["learning_rate"] = 1e9;
  WriteFile(dir_ / "div.json", j.dump());
  EXPECT_EQ(RunCli("all --config " + (dir_ / "div.json").string()), 3);
}

TEST_F(PipelineTest, CliSeedOverrideChangesOutputs) {
  if (!CliBuilt()) GTEST_SKIP() << "command-line tool not built";
  WriteFile(dir_ / "tiny.json", TinyJson(dir_ / "s1"));
  ASSERT_EQ(RunCli("prepare --config " + (dir_ / "tiny.json").string()), 0);
  ASSERT_EQ(RunCli("prepare --config " + (dir_ / "tiny.json").string() +
                   " --seed 99 --out " + (dir_ / "s2").string()),
            0);
  EXPECT_NE(ReadFile(dir_ / "s1" / "raw" / "ratings.txt"),
            ReadFile(dir_ / "s2" / "raw" / "ratings.txt"));
}

}  // namespace
}  // namespace nirec
