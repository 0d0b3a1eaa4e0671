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

// Run configuration: parsing, canonical echo and per-stage hashes.

#include <algorithm>
#include <initializer_list>
#include <cmath>
#include <set>
#include <span>

#include <fmt/format.h>

#include "json.hpp"
#include "json_io.h"
#include "nirec/checksum.h"
#include "nirec/pipeline.h"

namespace nirec {
namespace {

using Json = nlohmann::json;

// Bumped whenever a stage's artifact layout changes.
constexpr int kPipelineVersion = 1;

void CheckKeys(const Json& j, std::string_view where,
               std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw InputError(fmt::format("config {}: expected an object", where));
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw InputError(fmt::format("config {}: unknown key '{}'", where, key));
    }
  }
}

template <typename T>
void Get(const Json& j, std::string_view where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("config {}.{}: {}", where, key, e.what()));
  }
}

void GetPath(const Json& j, std::string_view where, const char* key,
             std::filesystem::path& out) {
  std::string s = out.string();
  Get(j, where, key, s);
  out = s;
}

void GetMethods(const Json& j, std::string_view where, const char* key,
                std::vector<Method>& out) {
  std::vector<std::string> names;
  if (!j.contains(key)) return;
  Get(j, where, key, names);
  out.clear();
  for (const auto& n : names) out.push_back(ParseMethod(n));
}

TrainConfig ReadTrain(const Json& j, std::string_view where, TrainConfig c) {
  CheckKeys(j, where,
            {"dim", "epochs", "learning_rate", "l2_reg", "batch_size", "init_scale"});
  Get(j, where, "dim", c.dim);
  Get(j, where, "epochs", c.epochs);
  Get(j, where, "learning_rate", c.learning_rate);
  Get(j, where, "l2_reg", c.l2_reg);
  Get(j, where, "batch_size", c.batch_size);
  Get(j, where, "init_scale", c.init_scale);
  return c;
}

Json TrainJson(const TrainConfig& c) {
  return {{"dim", c.dim},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"l2_reg", c.l2_reg},
          {"batch_size", c.batch_size},
          {"init_scale", c.init_scale}};
}

Json MethodsJson(const std::vector<Method>& methods) {
  Json out = Json::array();
  for (Method m : methods) out.push_back(std::string(MethodName(m)));
  return out;
}

Json DataJson(const RunConfig& c) {
  const auto& s = c.synth;
  return {{"ratings", c.ratings_path.string()},
          {"trust", c.trust_path.string()},
          {"columns",
           {{"user", c.columns.user_col},
            {"item", c.columns.item_col},
            {"rating", c.columns.rating_col}}},
          {"k_core", c.k_core},
          {"synthetic", c.synthetic},
          {"synth",
           {{"n_users", s.n_users},
            {"n_items", s.n_items},
            {"n_communities", s.n_communities},
            {"latent_dim", s.latent_dim},
            {"mean_out_degree", s.mean_out_degree},
            {"homophily", s.homophily},
            {"ratings_per_user", s.ratings_per_user},
            {"taste_noise", s.taste_noise},
            {"rating_noise", s.rating_noise},
            {"popularity_skew", s.popularity_skew}}}};
}

Json SimulationJson(const RunConfig& c) {
  const auto& p = c.propensity;
  return {{"rating_mf", TrainJson(c.rating_mf)},
          {"sim_mf", TrainJson(c.sim_mf)},
          {"reference_hist", c.reference_hist},
          {"align_samples", c.align_samples},
          {"betas", c.betas},
          {"propensity",
           {{"alpha1", p.alpha1},
            {"alpha2", p.alpha2},
            {"alpha3", p.alpha3},
            {"target_size", p.target_size},
            {"target_influential", p.target_influential},
            {"rounds", p.rounds},
            {"saturation", p.saturation},
            {"propensity_floor", p.propensity_floor},
            {"max_restarts", p.max_restarts},
            {"size_tolerance", p.size_tolerance},
            {"influential_tolerance", p.influential_tolerance}}},
          {"match_influential", c.match_influential}};
}

Json TargetsJson(const RunConfig& c) {
  return {{"group_sizes", c.group_sizes},
          {"thresholds", c.thresholds},
          {"n_items", c.n_target_items}};
}

Json TrainingJson(const RunConfig& c) {
  Json est = TrainJson(c.estimator.train);
  est["init_mean"] = c.estimator.init_mean;
  est["dense_l2"] = c.estimator.dense_l2;
  est["use_adam"] = c.estimator.use_adam;
  est["max_halvings"] = c.estimator.max_halvings;
  return {{"estimator", est},
          {"backbone", TrainJson(c.backbone)},
          {"lgc_layers", c.lgc_layers},
          {"experience", TrainJson(c.experience)},
          {"experience_layers", c.experience_layers},
          {"gradcheck_coords", c.gradcheck_coords}};
}

Json SteeringJson(const RunConfig& c) {
  return {{"k", c.top_k}, {"gammas", c.gammas}, {"methods", MethodsJson(c.methods)}};
}

Json EvaluationJson(const RunConfig& c) {
  return {{"adjustment", c.adjustment},
          {"adjust_fraction", c.adjust_fraction},
          {"adjust_methods", MethodsJson(c.adjust_methods)}};
}

Json ConfigJson(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out_dir", c.out_dir.string()},
          {"data", DataJson(c)},
          {"simulation", SimulationJson(c)},
          {"targets", TargetsJson(c)},
          {"training", TrainingJson(c)},
          {"steering", SteeringJson(c)},
          {"evaluation", EvaluationJson(c)}};
}

}  // namespace

std::vector<double> LevelHistogram(std::span<const double> levels) {
  if (levels.size() != 5) {
    throw InputError("reference_levels needs 5 probabilities for ratings 1..5");
  }
  double total = 0.0;
  for (double p : levels) {
    if (!(p >= 0)) throw InputError("reference_levels must be nonnegative");
    total += p;
  }
  if (!(total > 0)) throw InputError("reference_levels must not all be zero");
  std::vector<double> hist(kRatingHistogramBins, 0.0);
  const double width = 4.0 / (kRatingHistogramBins - 1);
  for (int r = 0; r < 5; ++r) {
    hist[static_cast<std::size_t>(std::lround(r / width))] += levels[r] / total;
  }
  return hist;
}

void RunConfig::Validate() const {
  if (k_core < 1) throw InputError("config data.k_core must be >= 1");
  if (synthetic) synth.Validate();
  rating_mf.Validate();
  sim_mf.Validate();
  estimator.train.Validate();
  backbone.Validate();
  experience.Validate();
  propensity.Validate();
  if (!reference_hist.empty() &&
      reference_hist.size() != static_cast<std::size_t>(kRatingHistogramBins)) {
    throw InputError(fmt::format("config simulation.reference_hist needs {} bins",
                                 kRatingHistogramBins));
  }
  if (betas.empty()) throw InputError("config simulation.betas is empty");
  for (double b : betas) {
    if (!(b >= 0)) throw InputError("config simulation.betas must be >= 0");
  }
  if (std::set<double>(betas.begin(), betas.end()).size() != betas.size()) {
    throw InputError("config simulation.betas has duplicates");
  }
  if (group_sizes.empty() || thresholds.empty()) {
    throw InputError("config targets needs group_sizes and thresholds");
  }
  for (int g : group_sizes) {
    if (g < 1) throw InputError("config targets.group_sizes must be >= 1");
  }
  if (n_target_items < 1) throw InputError("config targets.n_items must be >= 1");
  if (lgc_layers < 0 || experience_layers < 0) {
    throw InputError("config training layer counts must be >= 0");
  }
  if (estimator.max_halvings < 0) {
    throw InputError("config training.estimator.max_halvings must be >= 0");
  }
  if (top_k < 1) throw InputError("config steering.k must be >= 1");
  if (gammas.empty() || !std::is_sorted(gammas.begin(), gammas.end()) ||
      gammas.front() < 0) {
    throw InputError("config steering.gammas must be nonempty, ascending, >= 0");
  }
  if (methods.empty()) throw InputError("config steering.methods is empty");
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size()) {
    throw InputError("config steering.methods has duplicates");
  }
  if (adjustment) {
    if (!(adjust_fraction > 0 && adjust_fraction < 1)) {
      throw InputError("config evaluation.adjust_fraction must be in (0, 1)");
    }
    for (Method m : adjust_methods) {
      if (m != Method::kNIRec && m != Method::kOracle) {
        throw InputError("config evaluation.adjust_methods supports NIRec and Oracle");
      }
    }
  }
}

RunConfig ParseRunConfig(const std::string& json_text) {
  Json root;
  try {
    root = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  RunConfig c;
  CheckKeys(root, "root",
            {"seed", "out_dir", "data", "simulation", "targets", "training",
             "steering", "evaluation"});
  Get(root, "root", "seed", c.seed);
  GetPath(root, "root", "out_dir", c.out_dir);

  if (root.contains("data")) {
    const Json& d = root["data"];
    CheckKeys(d, "data",
              {"ratings", "trust", "columns", "k_core", "synthetic", "synth"});
    GetPath(d, "data", "ratings", c.ratings_path);
    GetPath(d, "data", "trust", c.trust_path);
    Get(d, "data", "k_core", c.k_core);
    Get(d, "data", "synthetic", c.synthetic);
    if (d.contains("columns")) {
      const Json& col = d["columns"];
      CheckKeys(col, "data.columns", {"user", "item", "rating"});
      Get(col, "data.columns", "user", c.columns.user_col);
      Get(col, "data.columns", "item", c.columns.item_col);
      Get(col, "data.columns", "rating", c.columns.rating_col);
    }
    if (d.contains("synth")) {
      const Json& s = d["synth"];
      constexpr std::string_view w = "data.synth";
      CheckKeys(s, w,
                {"n_users", "n_items", "n_communities", "latent_dim",
                 "mean_out_degree", "homophily", "ratings_per_user",
                 "taste_noise", "rating_noise", "popularity_skew"});
      Get(s, w, "n_users", c.synth.n_users);
      Get(s, w, "n_items", c.synth.n_items);
      Get(s, w, "n_communities", c.synth.n_communities);
      Get(s, w, "latent_dim", c.synth.latent_dim);
      Get(s, w, "mean_out_degree", c.synth.mean_out_degree);
      Get(s, w, "homophily", c.synth.homophily);
      Get(s, w, "ratings_per_user", c.synth.ratings_per_user);
      Get(s, w, "taste_noise", c.synth.taste_noise);
      Get(s, w, "rating_noise", c.synth.rating_noise);
      Get(s, w, "popularity_skew", c.synth.popularity_skew);
    }
  }

  if (root.contains("simulation")) {
    const Json& s = root["simulation"];
    CheckKeys(s, "simulation",
              {"rating_mf", "sim_mf", "reference_hist", "reference_levels",
               "align_samples", "betas", "propensity", "match_influential"});
    if (s.contains("rating_mf")) c.rating_mf = ReadTrain(s["rating_mf"], "simulation.rating_mf", c.rating_mf);
    if (s.contains("sim_mf")) c.sim_mf = ReadTrain(s["sim_mf"], "simulation.sim_mf", c.sim_mf);
    Get(s, "simulation", "reference_hist", c.reference_hist);
    if (s.contains("reference_levels")) {
      if (s.contains("reference_hist")) {
        throw InputError("config simulation: give reference_hist or reference_levels, not both");
      }
      std::vector<double> levels;
      Get(s, "simulation", "reference_levels", levels);
      c.reference_hist = LevelHistogram(levels);
    }
    Get(s, "simulation", "align_samples", c.align_samples);
    Get(s, "simulation", "betas", c.betas);
    Get(s, "simulation", "match_influential", c.match_influential);
    if (s.contains("propensity")) {
      const Json& p = s["propensity"];
      constexpr std::string_view w = "simulation.propensity";
      CheckKeys(p, w,
                {"alpha1", "alpha2", "alpha3", "target_size", "target_influential",
                 "rounds", "saturation", "propensity_floor", "max_restarts",
                 "size_tolerance", "influential_tolerance"});
      auto& q = c.propensity;
      Get(p, w, "alpha1", q.alpha1);
      Get(p, w, "alpha2", q.alpha2);
      Get(p, w, "alpha3", q.alpha3);
      Get(p, w, "target_size", q.target_size);
      Get(p, w, "target_influential", q.target_influential);
      Get(p, w, "rounds", q.rounds);
      Get(p, w, "saturation", q.saturation);
      Get(p, w, "propensity_floor", q.propensity_floor);
      Get(p, w, "max_restarts", q.max_restarts);
      Get(p, w, "size_tolerance", q.size_tolerance);
      Get(p, w, "influential_tolerance", q.influential_tolerance);
    }
  }

  if (root.contains("targets")) {
    const Json& t = root["targets"];
    CheckKeys(t, "targets", {"group_sizes", "thresholds", "n_items"});
    Get(t, "targets", "group_sizes", c.group_sizes);
    Get(t, "targets", "thresholds", c.thresholds);
    Get(t, "targets", "n_items", c.n_target_items);
  }

  if (root.contains("training")) {
    const Json& t = root["training"];
    CheckKeys(t, "training",
              {"estimator", "backbone", "lgc_layers", "experience",
               "experience_layers", "gradcheck_coords"});
    if (t.contains("estimator")) {
      Json e = t["estimator"];
      constexpr std::string_view w = "training.estimator";
      if (!e.is_object()) throw InputError("config training.estimator: expected an object");
      Get(e, w, "init_mean", c.estimator.init_mean);
      Get(e, w, "dense_l2", c.estimator.dense_l2);
      Get(e, w, "use_adam", c.estimator.use_adam);
      Get(e, w, "max_halvings", c.estimator.max_halvings);
      e.erase("init_mean");
      e.erase("dense_l2");
      e.erase("use_adam");
      e.erase("max_halvings");
      c.estimator.train = ReadTrain(e, w, c.estimator.train);
    }
    if (t.contains("backbone")) c.backbone = ReadTrain(t["backbone"], "training.backbone", c.backbone);
    if (t.contains("experience")) c.experience = ReadTrain(t["experience"], "training.experience", c.experience);
    Get(t, "training", "lgc_layers", c.lgc_layers);
    Get(t, "training", "experience_layers", c.experience_layers);
    Get(t, "training", "gradcheck_coords", c.gradcheck_coords);
  }

  if (root.contains("steering")) {
    const Json& s = root["steering"];
    CheckKeys(s, "steering", {"k", "gammas", "gamma_grid", "methods"});
    Get(s, "steering", "k", c.top_k);
    Get(s, "steering", "gammas", c.gammas);
    if (s.contains("gamma_grid")) {
      if (s.contains("gammas")) {
        throw InputError("config steering: give gammas or gamma_grid, not both");
      }
      const Json& g = s["gamma_grid"];
      CheckKeys(g, "steering.gamma_grid", {"lo", "hi", "step"});
      double lo = 0, hi = 1, step = 0.1;
      Get(g, "steering.gamma_grid", "lo", lo);
      Get(g, "steering.gamma_grid", "hi", hi);
      Get(g, "steering.gamma_grid", "step", step);
      c.gammas = GammaGrid(lo, hi, step);
    }
    GetMethods(s, "steering", "methods", c.methods);
  }

  if (root.contains("evaluation")) {
    const Json& e = root["evaluation"];
    CheckKeys(e, "evaluation", {"adjustment", "adjust_fraction", "adjust_methods"});
    Get(e, "evaluation", "adjustment", c.adjustment);
    Get(e, "evaluation", "adjust_fraction", c.adjust_fraction);
    GetMethods(e, "evaluation", "adjust_methods", c.adjust_methods);
  }
  c.Validate();
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw InputError(fmt::format("config file not found: {}", path.string()));
  }
  return ParseRunConfig(ReadTextFile(path));
}

std::string RunConfigToJson(const RunConfig& config) {
  return ConfigJson(config).dump();
}

std::string_view StageName(Stage s) {
  switch (s) {
    case Stage::kPrepare: return "prepare";
    case Stage::kSimulate: return "simulate";
    case Stage::kTrain: return "train";
    case Stage::kSteer: return "steer";
    case Stage::kReport: return "report";
  }
  return "unknown";
}

std::string StageConfigHash(const RunConfig& config, Stage stage) {
  Json j;
  j["pipeline_version"] = kPipelineVersion;
  j["seed"] = config.seed;
  j["data"] = DataJson(config);
  if (stage >= Stage::kSimulate) {
    j["simulation"] = SimulationJson(config);
    j["targets"] = TargetsJson(config);
  }
  if (stage >= Stage::kTrain) j["training"] = TrainingJson(config);
  if (stage >= Stage::kSteer) {
    j["steering"] = SteeringJson(config);
    j["evaluation"] = EvaluationJson(config);
  }
  return Sha256Hex(j.dump());
}

}  // namespace nirec
