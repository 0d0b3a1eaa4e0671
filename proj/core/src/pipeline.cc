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

#include "nirec/pipeline.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "json_io.h"
#include "nirec/checksum.h"
#include "nirec/evalx.h"

namespace nirec {
namespace {

using Json = nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Stream tags for DeriveSeed.
enum SeedTag : std::uint64_t {
  kSeedSynth = 1,
  kSeedRatingMF = 2,
  kSeedAlign = 3,
  kSeedSimMF = 4,
  kSeedExposure = 5,
  kSeedFeedback = 6,
  kSeedTargets = 7,
  kSeedEstimator = 8,
  kSeedBackboneMF = 9,
  kSeedBackboneLGC = 10,
  kSeedExperience = 11,
  kSeedGradCheck = 12,
  kSeedAdjust = 13,
};

std::uint64_t StageSeed(const RunConfig& c, SeedTag tag, std::uint64_t sub = 0) {
  const std::uint64_t base = DeriveSeed(c.seed, tag);
  return sub == 0 ? base : DeriveSeed(base, sub);
}

template <typename... Args>
void Log(const RunOptions& o, fmt::format_string<Args...> f, Args&&... args) {
  if (o.log == nullptr) return;
  *o.log << fmt::format(f, std::forward<Args>(args)...) << '\n';
  o.log->flush();
}

double ElapsedMs(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// ---- manifest -------------------------------------------------------------

Json LoadManifest(const RunLayout& layout) {
  if (!fs::exists(layout.Manifest())) return Json{{"stages", Json::object()}};
  Json m = ReadArtifact(layout.Manifest(), "manifest");
  if (!m.contains("stages")) m["stages"] = Json::object();
  return m;
}

void RecordStage(const RunConfig& config, const RunLayout& layout, Stage stage,
                 const std::vector<fs::path>& artifacts, double wall_ms) {
  Json m = LoadManifest(layout);
  m["config"] = Json::parse(RunConfigToJson(config));
  // A rerun invalidates everything downstream.
  for (int s = static_cast<int>(stage) + 1; s <= static_cast<int>(Stage::kReport); ++s) {
    m["stages"].erase(std::string(StageName(static_cast<Stage>(s))));
  }
  Json files = Json::object();
  for (const auto& p : artifacts) {
    files[fs::relative(p, layout.root).generic_string()] = Sha256File(p);
  }
  m["stages"][std::string(StageName(stage))] = {
      {"config_hash", StageConfigHash(config, stage)},
      {"seed", config.seed},
      {"artifacts", files},
      {"wall_ms", wall_ms}};
  WriteArtifact(layout.Manifest(), "manifest", m);
}

void RequireOneStage(const Json& m, const RunConfig& config,
                     const RunLayout& layout, Stage stage) {
  const std::string name(StageName(stage));
  if (!m["stages"].contains(name)) {
    throw InputError(fmt::format("stage '{}' has not run in {}; run `nirec {}` first",
                                 name, layout.root.string(), name));
  }
  const Json& entry = m["stages"][name];
  if (entry.value("config_hash", "") != StageConfigHash(config, stage)) {
    throw InputError(fmt::format(
        "stage '{}' in {} was produced by a different configuration; rerun it",
        name, layout.root.string()));
  }
  for (const auto& [rel, sha] : entry["artifacts"].items()) {
    const fs::path p = layout.root / rel;
    if (!fs::exists(p) || Sha256File(p) != sha.get<std::string>()) {
      throw InputError(fmt::format("artifact {} is missing or modified; rerun '{}'",
                                   p.string(), name));
    }
  }
}

// Checks `stage` and everything upstream of it, since later stages read
// earlier artifacts directly.
void RequireStage(const RunConfig& config, const RunLayout& layout, Stage stage) {
  const Json m = LoadManifest(layout);
  for (int s = 0; s <= static_cast<int>(stage); ++s) {
    RequireOneStage(m, config, layout, static_cast<Stage>(s));
  }
}

// ---- models on disk -------------------------------------------------------

struct World {
  Dataset dataset;
  std::shared_ptr<const SocialGraph> graph;
  SimOracle base;  // beta taken from the per-world list
};

World LoadWorld(const RunLayout& layout) {
  World w;
  w.dataset = LoadDataset(layout.DatasetFile());
  w.graph = std::make_shared<const SocialGraph>(w.dataset.graph);
  w.base = LoadOracle(layout.OracleFile(), w.graph);
  return w;
}

struct TrainedModels {
  NIRecModel nirec;
  LayeredGraphModel mf;
  LayeredGraphModel lgc;
  LayeredGraphModel experience;
};

TrainedModels LoadTrained(const RunLayout& layout, double beta,
                          std::shared_ptr<const SocialGraph> graph) {
  const fs::path dir = layout.TrainDir(beta);
  return {LoadNIRecModel(dir / "nirec.json", graph),
          LoadLayeredModel(dir / "mf.json"), LoadLayeredModel(dir / "lgc.json"),
          LoadLayeredModel(dir / "experience.json")};
}

// ---- sweep rows -----------------------------------------------------------

std::string SweepRowCsv(const SweepRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.spec_id,
                     r.target_item, r.method, r.gamma, r.group_size, r.beta,
                     r.threshold, r.ioip, r.dtne, r.steering_sum, r.damage,
                     r.value, r.evaluations, r.bits.empty() ? "-" : r.bits);
}

struct Cell {
  double beta;
  std::size_t beta_index;
  int group_size;
  double threshold;
  std::vector<TargetSpec> specs;
};

struct Task {
  std::size_t cell;
  std::size_t spec;
};

struct TaskResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> timing;  // "spec_id,method,wall_ms"
};

std::string AdjustLabel(Method m, AdjustStrategy s) {
  return fmt::format("{}+adjust-{}", MethodName(m),
                     s == AdjustStrategy::kRandom ? "random" : "impact");
}

TaskResult RunTask(const RunConfig& config, const Cell& cell, std::size_t spec_id,
                   const SimOracle& oracle, const TrainedModels& models) {
  const TargetSpec& spec = cell.specs[spec_id];
  const ExperienceContext ctx = BuildExperience(
      models.experience.final, config.top_k, spec.target_item, spec.neighbor_users);
  MethodSuite suite{&oracle, &models.nirec, &models.mf.final, &models.lgc.final,
                    cell.beta};
  TaskResult out;
  const auto emit = [&](const std::string& label, const std::vector<CurvePoint>& curve,
                        double wall_ms) {
    for (const auto& p : curve) {
      std::string bits;
      for (std::uint8_t b : p.bits) bits += b ? '1' : '0';
      out.rows.push_back({spec_id, spec.target_item, label, p.gamma, cell.group_size,
                          cell.beta, cell.threshold, p.ioip, p.dtne,
                          p.breakdown.steering_sum, p.breakdown.damage,
                          p.breakdown.value, p.evaluations, std::move(bits)});
    }
    out.timing.push_back(fmt::format("{},{},{:.3f}", spec_id, label, wall_ms));
  };
  for (Method m : config.methods) {
    const auto start = Clock::now();
    const auto curve = BuildCurve(suite, spec, ctx, m, config.gammas);
    emit(std::string(MethodName(m)), curve, ElapsedMs(start));
  }
  if (!config.adjustment || spec.target_users.size() < 2) return out;

  const std::size_t g = spec.target_users.size();
  const std::size_t n_remove = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config.adjust_fraction * static_cast<double>(g))),
      1, g - 1);
  for (AdjustStrategy strategy :
       {AdjustStrategy::kHighestNegativeImpact, AdjustStrategy::kRandom}) {
    for (Method m : config.adjust_methods) {
      const auto start = Clock::now();
      ImpactScorer scorer;
      const NIRecPredictor nirec_pred(models.nirec);
      const std::vector<std::uint8_t> bits = ctx.DefaultBits();
      if (m == Method::kOracle) {
        scorer = [&](UserId u) { return NegativeImpactClosedForm(oracle, u, spec); };
      } else {
        scorer = [&](UserId u) { return NegativeImpactMarginal(nirec_pred, u, spec, bits); };
      }
      const std::uint64_t seed = StageSeed(
          config, kSeedAdjust,
          1 + spec_id + 100003 * (cell.beta_index + 1) + 7919 * static_cast<std::uint64_t>(g));
      const GroupAdjustment adj =
          AdjustGroup(*oracle.graph, spec, strategy, n_remove, seed, scorer);
      const SimOracle adj_oracle = oracle.WithGraph(adj.adjusted_graph);
      const NIRecModel adj_model = models.nirec.WithGraph(adj.adjusted_graph);
      MethodSuite adj_suite{&adj_oracle, &adj_model, &models.mf.final,
                            &models.lgc.final, cell.beta};
      const auto curve =
          BuildCurve(adj_suite, adj.adjusted_spec, ctx, m, config.gammas);
      emit(AdjustLabel(m, strategy), curve, ElapsedMs(start));
    }
  }
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
// failure (by index) after all threads finish.
template <typename Fn>
void ParallelFor(std::size_t n, int workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Cell> LoadCells(const RunConfig& config, const RunLayout& layout) {
  std::vector<Cell> cells;
  for (std::size_t b = 0; b < config.betas.size(); ++b) {
    for (int g : config.group_sizes) {
      for (double t : config.thresholds) {
        cells.push_back({config.betas[b], b, g, t, LoadTargetSpecs(layout.TargetsFile(g, t))});
      }
    }
  }
  return cells;
}

std::vector<Task> AllTasks(const std::vector<Cell>& cells) {
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < cells[c].specs.size(); ++s) tasks.push_back({c, s});
  }
  return tasks;
}

}  // namespace

std::string FormatNumber(double x) { return fmt::format("{}", x); }

fs::path RunLayout::FeedbackFile(double beta) const {
  return root / "simulate" / fmt::format("feedback_beta{}.txt", FormatNumber(beta));
}
fs::path RunLayout::TargetsFile(int group_size, double threshold) const {
  return root / "simulate" /
         fmt::format("targets_g{}_t{}.txt", group_size, FormatNumber(threshold));
}
fs::path RunLayout::TrainDir(double beta) const {
  return root / "train" / fmt::format("beta{}", FormatNumber(beta));
}
fs::path RunLayout::SweepFile(double beta, int group_size, double threshold) const {
  return root / "steer" /
         fmt::format("sweep_beta{}_g{}_t{}.csv", FormatNumber(beta), group_size,
                     FormatNumber(threshold));
}
fs::path RunLayout::TimingFile(double beta, int group_size, double threshold) const {
  return root / "steer" /
         fmt::format("timing_beta{}_g{}_t{}.csv", FormatNumber(beta), group_size,
                     FormatNumber(threshold));
}
fs::path RunLayout::PlotFile(int group_size, double beta, double threshold) const {
  return root / "report" /
         fmt::format("curve_g{}_beta{}_t{}.svg", group_size, FormatNumber(beta),
                     FormatNumber(threshold));
}

std::string SweepCsvHeader() {
  return "spec_id,target_item,method,gamma,group_size,beta,t,ioip,dtne,"
         "steering_sum,damage,value,evaluations,bits";
}

std::vector<SweepRow> ParseSweepCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != SweepCsvHeader()) {
    throw InputError("sweep CSV header mismatch");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 14) throw InputError(fmt::format("bad sweep row '{}'", line));
    try {
      rows.push_back({std::stoul(f[0]), std::stoi(f[1]), f[2], std::stod(f[3]),
                      std::stoi(f[4]), std::stod(f[5]), std::stod(f[6]),
                      std::stod(f[7]), std::stod(f[8]), std::stod(f[9]),
                      std::stod(f[10]), std::stod(f[11]), std::stoul(f[12]),
                      f[13] == "-" ? std::string() : f[13]});
    } catch (const std::exception&) {
      throw InputError(fmt::format("bad sweep row '{}'", line));
    }
  }
  return rows;
}

void CmdPrepare(const RunConfig& config, const RunOptions& options) {
  config.Validate();
  const auto start = Clock::now();
  const RunLayout layout{config.out_dir};
  std::vector<fs::path> artifacts;
  fs::path ratings_path = config.ratings_path;
  fs::path trust_path = config.trust_path;
  if (config.synthetic) {
    SynthConfig synth = config.synth;
    synth.seed = StageSeed(config, kSeedSynth);
    WriteCorpus(GenerateCorpus(synth), layout.RawRatings(), layout.RawTrust());
    ratings_path = layout.RawRatings();
    trust_path = layout.RawTrust();
    artifacts.push_back(ratings_path);
    artifacts.push_back(trust_path);
  } else if (ratings_path.empty() || trust_path.empty()) {
    throw InputError("config data needs ratings and trust paths (or synthetic: true)");
  }
  for (const auto& p : {ratings_path, trust_path}) {
    if (!fs::exists(p)) throw InputError(fmt::format("input file not found: {}", p.string()));
  }
  const RatingsFile ratings = LoadRatings(ratings_path, config.columns);
  const TrustFile trust = LoadTrust(trust_path);
  if (ratings.clamped > 0) Log(options, "warning: {} ratings clamped to [1, 5]", ratings.clamped);
  if (trust.self_loops > 0) Log(options, "warning: {} self-loops dropped", trust.self_loops);
  const Dataset dataset = KCoreFilter(ratings.records, trust.edges, config.k_core);
  const DatasetStats stats = ComputeStats(dataset);
  SaveDataset(dataset, layout.DatasetFile());
  WriteArtifact(layout.StatsFile(), "dataset-stats",
                {{"n_users", stats.n_users},
                 {"n_items", stats.n_items},
                 {"n_interactions", stats.n_interactions},
                 {"n_social_edges", stats.n_social_edges},
                 {"edge_density", stats.edge_density},
                 {"n_influential_pairs", stats.n_influential_pairs},
                 {"clamped_ratings", ratings.clamped},
                 {"self_loops", trust.self_loops},
                 {"k_core", config.k_core}});
  artifacts.push_back(layout.DatasetFile());
  artifacts.push_back(layout.StatsFile());
  Log(options, "{:>8} {:>8} {:>13} {:>13} {:>9} {:>12}", "users", "items",
      "interactions", "social_edges", "density", "influential");
  Log(options, "{:>8} {:>8} {:>13} {:>13} {:>8.3f}% {:>12}", stats.n_users,
      stats.n_items, stats.n_interactions, stats.n_social_edges,
      100.0 * stats.edge_density, stats.n_influential_pairs);
  RecordStage(config, layout, Stage::kPrepare, artifacts, ElapsedMs(start));
}

void CmdSimulate(const RunConfig& config, const RunOptions& options) {
  config.Validate();
  const RunLayout layout{config.out_dir};
  RequireStage(config, layout, Stage::kPrepare);
  const auto start = Clock::now();
  const Dataset dataset = LoadDataset(layout.DatasetFile());
  const auto graph = std::make_shared<const SocialGraph>(dataset.graph);
  std::vector<fs::path> artifacts;

  TrainConfig rating_cfg = config.rating_mf;
  rating_cfg.seed = StageSeed(config, kSeedRatingMF);
  const MFModel rating_mf =
      TrainMFRatings(dataset.interactions, dataset.n_users, dataset.n_items, rating_cfg);
  Log(options, "rating MF: final loss {:.4f}", rating_mf.final_loss());

  std::vector<double> observed;
  observed.reserve(dataset.interactions.size());
  for (const auto& r : dataset.interactions) observed.push_back(r.rating);
  const std::vector<double> reference =
      config.reference_hist.empty() ? RatingHistogram(observed) : config.reference_hist;
  const AlignedRatings aligned(rating_mf, dataset.interactions, reference,
                               StageSeed(config, kSeedAlign), config.align_samples);
  if (aligned.degenerate()) Log(options, "warning: constant predictions, aligned to median");

  std::vector<InteractionRecord> complete;
  complete.reserve(static_cast<std::size_t>(dataset.n_users) *
                   static_cast<std::size_t>(dataset.n_items));
  for (UserId u = 0; u < dataset.n_users; ++u) {
    for (ItemId i = 0; i < dataset.n_items; ++i) complete.push_back({u, i, aligned.Rating(u, i)});
  }
  TrainConfig sim_cfg = config.sim_mf;
  sim_cfg.seed = StageSeed(config, kSeedSimMF);
  const MFModel sim_mf = TrainMFRatings(complete, dataset.n_users, dataset.n_items, sim_cfg);
  complete.clear();
  complete.shrink_to_fit();
  Log(options, "simulation MF: final loss {:.4f}", sim_mf.final_loss());

  const SimOracle oracle{sim_mf.embeddings, config.betas.front(), graph};
  SaveOracle(oracle, layout.OracleFile());
  artifacts.push_back(layout.OracleFile());

  PropensityParams params = config.propensity;
  if (params.target_size == 0) params.target_size = dataset.interactions.size();
  if (config.match_influential) {
    params.target_influential = ComputeStats(dataset).n_influential_pairs;
  }
  const ExposureSample sample =
      SampleExposure(oracle, params, StageSeed(config, kSeedExposure));
  const auto& diag = sample.diagnostics;
  Log(options, "exposure: |D| {} (target {}), influential {} (target {}), restarts {}",
      diag.achieved_size, params.target_size, diag.achieved_influential,
      params.target_influential, diag.restarts);
  if (!diag.size_matched || (params.target_influential > 0 && !diag.influential_matched)) {
    Log(options, "warning: exposure targets not met: {}", diag.note);
  }

  Json feedback_diag = Json::array();
  for (std::size_t b = 0; b < config.betas.size(); ++b) {
    const double beta = config.betas[b];
    const SimOracle world{oracle.embeddings, beta, graph};
    const std::uint64_t seed = StageSeed(config, kSeedFeedback, b + 1);
    const auto records = GenerateFeedback(world, sample.exposure, seed);
    SaveSemiSynthetic(layout.FeedbackFile(beta), {seed, beta, params, diag}, records);
    artifacts.push_back(layout.FeedbackFile(beta));
    double positives = 0;
    for (const auto& r : records) positives += r.y;
    feedback_diag.push_back({{"beta", beta},
                             {"records", records.size()},
                             {"positive_rate", positives / static_cast<double>(records.size())}});
  }

  Json target_diag = Json::array();
  for (int g : config.group_sizes) {
    for (std::size_t t = 0; t < config.thresholds.size(); ++t) {
      const double threshold = config.thresholds[t];
      const auto sel = SelectTargets(
          oracle, g, threshold, config.n_target_items,
          StageSeed(config, kSeedTargets, 1 + static_cast<std::uint64_t>(g) * 1000 + t));
      SaveTargetSpecs(layout.TargetsFile(g, threshold), sel.specs);
      artifacts.push_back(layout.TargetsFile(g, threshold));
      target_diag.push_back({{"group_size", g},
                             {"threshold", threshold},
                             {"accepted", sel.specs.size()},
                             {"examined", sel.examined},
                             {"rejected", sel.rejected}});
      Log(options, "targets g={} t={}: {} accepted, {} rejected", g,
          FormatNumber(threshold), sel.specs.size(), sel.rejected);
    }
  }

  WriteArtifact(layout.SimDiagnostics(), "sim-diagnostics",
                {{"rating_mf_final_loss", rating_mf.final_loss()},
                 {"sim_mf_final_loss", sim_mf.final_loss()},
                 {"alignment_degenerate", aligned.degenerate()},
                 {"exposure",
                  {{"target_size", params.target_size},
                   {"target_influential", params.target_influential},
                   {"achieved_size", diag.achieved_size},
                   {"achieved_influential", diag.achieved_influential},
                   {"alpha1", diag.alpha1},
                   {"alpha2", diag.alpha2},
                   {"alpha3", diag.alpha3},
                   {"restarts", diag.restarts},
                   {"size_matched", diag.size_matched},
                   {"influential_matched", diag.influential_matched},
                   {"note", diag.note}}},
                 {"feedback", feedback_diag},
                 {"targets", target_diag}});
  artifacts.push_back(layout.SimDiagnostics());
  RecordStage(config, layout, Stage::kSimulate, artifacts, ElapsedMs(start));
}

void CmdTrain(const RunConfig& config, const RunOptions& options) {
  config.Validate();
  const RunLayout layout{config.out_dir};
  RequireStage(config, layout, Stage::kSimulate);
  const auto start = Clock::now();
  const Dataset dataset = LoadDataset(layout.DatasetFile());
  const auto graph = std::make_shared<const SocialGraph>(dataset.graph);
  std::vector<fs::path> artifacts;

  for (std::size_t b = 0; b < config.betas.size(); ++b) {
    const double beta = config.betas[b];
    const fs::path dir = layout.TrainDir(beta);
    const auto records = LoadSemiSynthetic(layout.FeedbackFile(beta));
    ExposureMatrix exposure(dataset.n_users, dataset.n_items);
    for (const auto& r : records) exposure.Insert(r.user, r.item);
    const auto samples = BuildTrainSamples(records, *graph, exposure);

    EstimatorConfig est = config.estimator;
    est.train.seed = StageSeed(config, kSeedEstimator, b + 1);
    NIRecModel model = MakeNIRecModel(dataset.n_users, dataset.n_items, est.train.dim,
                                      graph, est.train.seed, est.train.init_scale,
                                      est.init_mean);
    const EstimatorReport report = TrainNIRec(model, samples, est);
    if (report.aborted) {
      throw ConvergenceError(fmt::format("estimator training (beta {}) failed: {}",
                                         FormatNumber(beta), report.message));
    }
    Log(options, "NIRec beta={}: loss {:.4f} -> {:.4f}, {} halvings", FormatNumber(beta),
        report.loss_trajectory.front(), report.loss_trajectory.back(), report.halvings);
    SaveNIRecModel(model, est, report, dir / "nirec.json");

    // Post-training gradient check on a sample with exposed neighbors.
    std::size_t probe = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto& t = samples[s].neighbor_treatments;
      if (std::count(t.begin(), t.end(), std::uint8_t{1}) > 0) {
        probe = s;
        break;
      }
    }
    EstimatorGradCheckOptions gc;
    gc.n_coords = config.gradcheck_coords;
    gc.seed = StageSeed(config, kSeedGradCheck, b + 1);
    const GradCheckResult check = GradientCheck(model, samples[probe], gc);
    const bool passed = check.max_rel_error <= 1e-4;
    if (!passed) {
      Log(options, "warning: gradient check max relative error {:.3g} at {}",
          check.max_rel_error, check.worst);
    }
    WriteArtifact(dir / "gradcheck.json", "gradcheck",
                  {{"max_rel_error", check.max_rel_error},
                   {"n_checked", check.n_checked},
                   {"worst", check.worst},
                   {"passed", passed}});

    std::vector<UserItem> positives;
    for (const auto& r : records) {
      if (r.y == 1) positives.emplace_back(r.user, r.item);
    }
    TrainConfig mf_cfg = config.backbone;
    mf_cfg.seed = StageSeed(config, kSeedBackboneMF, b + 1);
    TrainConfig lgc_cfg = config.backbone;
    lgc_cfg.seed = StageSeed(config, kSeedBackboneLGC, b + 1);
    TrainConfig exp_cfg = config.experience;
    exp_cfg.seed = StageSeed(config, kSeedExperience, b + 1);
    SaveLayeredModel(TrainBpr(positives, dataset.n_users, dataset.n_items, 0, mf_cfg),
                     dir / "mf.json");
    SaveLayeredModel(
        TrainBpr(positives, dataset.n_users, dataset.n_items, config.lgc_layers, lgc_cfg),
        dir / "lgc.json");
    SaveLayeredModel(TrainBpr(positives, dataset.n_users, dataset.n_items,
                              config.experience_layers, exp_cfg),
                     dir / "experience.json");
    for (const char* f : {"nirec.json", "gradcheck.json", "mf.json", "lgc.json",
                          "experience.json"}) {
      artifacts.push_back(dir / f);
    }
  }
  RecordStage(config, layout, Stage::kTrain, artifacts, ElapsedMs(start));
}

bool CmdSteer(const RunConfig& config, const RunOptions& options) {
  config.Validate();
  const RunLayout layout{config.out_dir};
  RequireStage(config, layout, Stage::kTrain);
  const auto start = Clock::now();
  const World world = LoadWorld(layout);
  const std::vector<Cell> cells = LoadCells(config, layout);
  const std::vector<Task> tasks = AllTasks(cells);
  std::vector<TrainedModels> models;
  std::vector<SimOracle> oracles;
  for (double beta : config.betas) {
    models.push_back(LoadTrained(layout, beta, world.graph));
    oracles.push_back({world.base.embeddings, beta, world.graph});
  }

  // Resume only when the progress file belongs to this configuration.
  const std::string hash = StageConfigHash(config, Stage::kSteer);
  std::size_t done = 0;
  double prior_ms = 0.0;
  std::vector<std::vector<std::string>> rows(cells.size());
  std::vector<std::vector<std::string>> timing(cells.size());
  if (fs::exists(layout.SteerProgress())) {
    const Json p = ReadArtifact(layout.SteerProgress(), "steer-progress");
    if (p.value("config_hash", "") == hash) {
      done = std::min<std::size_t>(p.value("completed_tasks", 0), tasks.size());
      prior_ms = p.value("wall_ms", 0.0);
    }
  }
  if (done > 0) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::size_t n_done_here = 0;
      for (std::size_t t = 0; t < done; ++t) n_done_here += tasks[t].cell == c;
      const auto keep = [&](const std::string& line) {
        return std::stoul(line.substr(0, line.find(','))) < n_done_here;
      };
      for (auto [path, dest] : {std::pair{layout.SweepFile(cells[c].beta, cells[c].group_size, cells[c].threshold), &rows[c]},
                                std::pair{layout.TimingFile(cells[c].beta, cells[c].group_size, cells[c].threshold), &timing[c]}}) {
        if (!fs::exists(path)) continue;
        std::istringstream in(ReadTextFile(path));
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          if (!line.empty() && keep(line)) dest->push_back(line + "\n");
        }
      }
    }
    Log(options, "resuming steer after {} of {} specs", done, tasks.size());
  } else {
    fs::remove_all(layout.root / "steer");
  }

  const auto flush = [&](std::size_t completed, double wall_ms) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::string csv = SweepCsvHeader() + "\n";
      for (const auto& r : rows[c]) csv += r;
      WriteTextFile(layout.SweepFile(cells[c].beta, cells[c].group_size, cells[c].threshold), csv);
      std::string tcsv = "spec_id,method,wall_ms\n";
      for (const auto& r : timing[c]) tcsv += r;
      WriteTextFile(layout.TimingFile(cells[c].beta, cells[c].group_size, cells[c].threshold), tcsv);
    }
    WriteArtifact(layout.SteerProgress(), "steer-progress",
                  {{"config_hash", hash},
                   {"completed_tasks", completed},
                   {"total_tasks", tasks.size()},
                   {"wall_ms", wall_ms}});
  };

  const std::size_t chunk = static_cast<std::size_t>(std::max(1, options.workers)) * 2;
  std::size_t budget = options.max_specs == 0 ? tasks.size() : options.max_specs;
  while (done < tasks.size() && budget > 0) {
    const std::size_t n = std::min({chunk, tasks.size() - done, budget});
    std::vector<TaskResult> results(n);
    ParallelFor(n, options.workers, [&](std::size_t k) {
      const Task& task = tasks[done + k];
      const Cell& cell = cells[task.cell];
      results[k] = RunTask(config, cell, task.spec, oracles[cell.beta_index],
                           models[cell.beta_index]);
    });
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = tasks[done + k].cell;
      for (const auto& r : results[k].rows) rows[c].push_back(SweepRowCsv(r));
      for (const auto& t : results[k].timing) timing[c].push_back(t + "\n");
    }
    done += n;
    budget -= n;
    flush(done, prior_ms + ElapsedMs(start));
    Log(options, "steer: {}/{} specs", done, tasks.size());
  }
  if (done < tasks.size()) return false;

  std::vector<fs::path> artifacts;
  for (const auto& cell : cells) {
    artifacts.push_back(layout.SweepFile(cell.beta, cell.group_size, cell.threshold));
  }
  RecordStage(config, layout, Stage::kSteer, artifacts, prior_ms + ElapsedMs(start));
  return true;
}

void CmdReport(const RunConfig& config, const RunOptions& options) {
  config.Validate();
  const RunLayout layout{config.out_dir};
  RequireStage(config, layout, Stage::kSteer);
  const auto start = Clock::now();
  std::vector<MetricRow> metric_rows;
  for (double beta : config.betas) {
    for (int g : config.group_sizes) {
      for (double t : config.thresholds) {
        for (const auto& r : ParseSweepCsv(ReadTextFile(layout.SweepFile(beta, g, t)))) {
          metric_rows.push_back({{r.method, r.gamma, r.group_size, r.beta, r.threshold},
                                 r.ioip, r.dtne});
        }
      }
    }
  }
  if (metric_rows.empty()) throw InputError("no sweep rows to report");
  const auto agg = Aggregate(metric_rows);
  std::vector<fs::path> artifacts{layout.CurvesFile()};
  WriteTextFile(layout.CurvesFile(), CurveCsv(agg));

  std::map<std::tuple<int, double, double>, std::vector<AggregateRow>> by_cell;
  for (const auto& a : agg) {
    by_cell[{a.key.group_size, a.key.beta, a.key.threshold}].push_back(a);
  }
  for (const auto& [key, cell_rows] : by_cell) {
    const auto& [g, beta, t] = key;
    const fs::path plot = layout.PlotFile(g, beta, t);
    WriteTextFile(plot, RenderCurveSvg(cell_rows,
                                       fmt::format("group size {}, beta {}, t {}", g,
                                                   FormatNumber(beta), FormatNumber(t))));
    artifacts.push_back(plot);
    Log(options, "group size {}, beta {}, t {} (gamma = {}):", g, FormatNumber(beta),
        FormatNumber(t), FormatNumber(config.gammas.front()));
    for (const auto& r : cell_rows) {
      if (r.key.gamma != config.gammas.front()) continue;
      Log(options, "  {:<24} IoIP {:8.4f} +- {:.4f}   DtNE {:9.3f}   n={}", r.key.method,
          r.ioip_mean, r.ioip_se, r.dtne_mean, r.n_specs);
    }
  }
  RecordStage(config, layout, Stage::kReport, artifacts, ElapsedMs(start));
}

void CmdAll(const RunConfig& config, const RunOptions& options) {
  CmdPrepare(config, options);
  CmdSimulate(config, options);
  CmdTrain(config, options);
  RunOptions steer = options;
  steer.max_specs = 0;
  CmdSteer(config, steer);
  CmdReport(config, options);
}

}  // namespace nirec
