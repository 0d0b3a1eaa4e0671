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

#ifndef NIREC_PIPELINE_H_
#define NIREC_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nirec/backbones.h"
#include "nirec/corpus.h"
#include "nirec/estimator.h"
#include "nirec/simworld.h"
#include "nirec/steering.h"
#include "nirec/synth.h"

namespace nirec {

// Everything a reproduction run needs. Component seeds are not configured
// individually; each is derived from `seed` and a fixed stream tag.
struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "nirec-run";

  // data
  std::filesystem::path ratings_path;
  std::filesystem::path trust_path;
  ColumnSpec columns;
  int k_core = 10;
  bool synthetic = false;  // generate raw files instead of reading them
  SynthConfig synth;

  // simulation
  TrainConfig rating_mf;  // fits the observed ratings
  TrainConfig sim_mf{.dim = 16, .epochs = 40};  // refits the completed matrix
  std::vector<double> reference_hist;  // empty: observed-rating marginal
  std::size_t align_samples = 20000;
  std::vector<double> betas{10.0};
  PropensityParams propensity;  // target_size 0 means |observed ratings|
  bool match_influential = true;  // target the corpus' influential-pair count

  // target selection
  std::vector<int> group_sizes{1, 10};
  std::vector<double> thresholds{1.0};
  int n_target_items = 30;

  // training
  EstimatorConfig estimator;
  TrainConfig backbone{.dim = 16, .epochs = 60, .learning_rate = 0.05,
                       .l2_reg = 1e-4, .batch_size = 256};
  int lgc_layers = 2;
  TrainConfig experience{.dim = 16, .epochs = 60, .learning_rate = 0.05,
                         .l2_reg = 1e-4, .batch_size = 256};
  int experience_layers = 2;
  std::size_t gradcheck_coords = 100;

  // steering and evaluation
  int top_k = 10;
  std::vector<double> gammas = GammaGrid(0.0, 2.0, 0.1);
  std::vector<Method> methods{Method::kNIRec, Method::kOracle,
                              Method::kDirectMF, Method::kSimMF,
                              Method::kDirectLGC, Method::kSimLGC};
  bool adjustment = false;
  double adjust_fraction = 0.1;
  std::vector<Method> adjust_methods{Method::kNIRec, Method::kOracle};

  void Validate() const;
};

// 50-bin reference histogram with the given mass on ratings 1, 2, 3, 4, 5
// (renormalized).
std::vector<double> LevelHistogram(std::span<const double> levels);

// Missing keys keep their defaults; unknown keys are an InputError.
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::filesystem::path& path);
// Canonical JSON echo (sorted keys, compact).
std::string RunConfigToJson(const RunConfig& config);

enum class Stage { kPrepare, kSimulate, kTrain, kSteer, kReport };
std::string_view StageName(Stage s);
// Hash of the configuration sections that feed the stage and everything
// upstream of it; changes whenever a stage's inputs would change.
std::string StageConfigHash(const RunConfig& config, Stage stage);

struct RunOptions {
  int workers = 1;
  // Stop cmd_steer after this many newly completed specs (0: no limit).
  // Simulates an interruption; the next call resumes.
  std::size_t max_specs = 0;
  std::ostream* log = nullptr;
};

// Directory layout under out_dir.
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path Manifest() const { return root / "manifest.json"; }
  std::filesystem::path RawRatings() const { return root / "raw" / "ratings.txt"; }
  std::filesystem::path RawTrust() const { return root / "raw" / "trust.txt"; }
  std::filesystem::path DatasetFile() const { return root / "prepare" / "dataset.json"; }
  std::filesystem::path StatsFile() const { return root / "prepare" / "stats.json"; }
  std::filesystem::path OracleFile() const { return root / "simulate" / "oracle.json"; }
  std::filesystem::path SimDiagnostics() const { return root / "simulate" / "diagnostics.json"; }
  std::filesystem::path FeedbackFile(double beta) const;
  std::filesystem::path TargetsFile(int group_size, double threshold) const;
  std::filesystem::path TrainDir(double beta) const;
  std::filesystem::path SweepFile(double beta, int group_size, double threshold) const;
  std::filesystem::path TimingFile(double beta, int group_size, double threshold) const;
  std::filesystem::path SteerProgress() const { return root / "steer" / "progress.json"; }
  std::filesystem::path CurvesFile() const { return root / "report" / "curves.csv"; }
  std::filesystem::path PlotFile(int group_size, double beta, double threshold) const;
};

// Per-spec rows of a sweep CSV.
struct SweepRow {
  std::size_t spec_id = 0;
  ItemId target_item = 0;
  std::string method;
  double gamma = 0.0;
  int group_size = 0;
  double beta = 0.0;
  double threshold = 0.0;
  double ioip = 0.0;  // ground truth
  double dtne = 0.0;
  // The method's own objective at its chosen assignment.
  double steering_sum = 0.0;
  double damage = 0.0;
  double value = 0.0;
  std::size_t evaluations = 0;
  std::string bits;  // 0/1 per neighbor in N_{U*} order
};
std::string SweepCsvHeader();
std::vector<SweepRow> ParseSweepCsv(const std::string& text);

void CmdPrepare(const RunConfig& config, const RunOptions& options = {});
void CmdSimulate(const RunConfig& config, const RunOptions& options = {});
void CmdTrain(const RunConfig& config, const RunOptions& options = {});
// Returns true when every spec is done, false when stopped by max_specs.
bool CmdSteer(const RunConfig& config, const RunOptions& options = {});
void CmdReport(const RunConfig& config, const RunOptions& options = {});
void CmdAll(const RunConfig& config, const RunOptions& options = {});

// Beta rendered for file names and CSV cells ("10", "0.5").
std::string FormatNumber(double x);

}  // namespace nirec

#endif  // NIREC_PIPELINE_H_
