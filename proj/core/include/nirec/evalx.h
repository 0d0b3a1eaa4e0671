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

#ifndef NIREC_EVALX_H_
#define NIREC_EVALX_H_

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nirec/estimator.h"
#include "nirec/simworld.h"
#include "nirec/steering.h"

namespace nirec {

struct MetricReport {
  double ioip = 0.0;
  double dtne = 0.0;
  std::vector<double> before;  // sigmoid(eta) per target user
  std::vector<double> after;   // sigmoid(eta + beta * Delta) per target user
};

// Ground-truth evaluation of an assignment: treatments are assembled as in
// SteeringProblem (U* exposed, N_{U*} from `bits`).
MetricReport EvaluateAssignment(const SimOracle& oracle, const TargetSpec& spec,
                                const ExperienceContext& ctx,
                                std::span<const std::uint8_t> bits);

// Mean over U* of (sigmoid(eta + beta Delta) - sigmoid(eta)) / sigmoid(eta).
double Ioip(const SimOracle& oracle, const TargetSpec& spec,
            const ExperienceContext& ctx, std::span<const std::uint8_t> bits);
double Dtne(const ExperienceContext& ctx, std::span<const std::uint8_t> bits);

// What each steering method needs. Backbones are the baseline recommenders'
// embeddings (MF: BPR without propagation, LGC: propagated).
struct MethodSuite {
  const SimOracle* oracle = nullptr;
  const NIRecModel* nirec = nullptr;
  const EmbeddingTable* mf = nullptr;
  const EmbeddingTable* lgc = nullptr;
  double sim_beta = 10.0;
};

TreatmentAssignment RunMethod(Method method, const MethodSuite& suite,
                              const TargetSpec& spec,
                              const ExperienceContext& ctx, double gamma);

struct CurvePoint {
  double gamma = 0.0;
  double ioip = 0.0;
  double dtne = 0.0;
  Method method = Method::kNIRec;
  std::vector<std::uint8_t> bits;
  ObjectiveBreakdown breakdown;  // as seen by the method's own optimizer
  std::size_t evaluations = 0;
};

std::vector<CurvePoint> BuildCurve(const MethodSuite& suite,
                                   const TargetSpec& spec,
                                   const ExperienceContext& ctx, Method method,
                                   std::span<const double> gamma_grid);

enum class AdjustStrategy { kHighestNegativeImpact, kRandom };

// Negative impact of target u on the rest of the group.
using ImpactScorer = std::function<double(UserId)>;

// Sum over v in U* with u in N_v of min(0, the Delta term u contributes to v).
double NegativeImpactClosedForm(const SimOracle& oracle, UserId u,
                                const TargetSpec& spec);

// Sum over v in U* with u in N_v of min(0, P(v | o_u = 1) - P(v | o_u = 0)),
// all other treatments assembled from `bits` (U* exposed).
double NegativeImpactMarginal(const OutcomePredictor& predictor, UserId u,
                              const TargetSpec& spec,
                              std::span<const std::uint8_t> bits);

struct GroupAdjustment {
  AdjustStrategy strategy = AdjustStrategy::kRandom;
  std::vector<UserId> selected;  // users whose edges into the group are cut
  std::vector<std::pair<UserId, UserId>> cut_edges;  // (truster, trustee)
  std::vector<double> impacts;  // per target user, empty for kRandom
  TargetSpec adjusted_spec;
  std::shared_ptr<const SocialGraph> adjusted_graph;
};

// Selects n_remove members (most negative impact first with ties to the
// lower id, or seeded uniform) and removes every edge (v, u) with v in U*,
// so u no longer interferes with other group members. The group itself is
// unchanged.
GroupAdjustment AdjustGroup(const SocialGraph& graph, const TargetSpec& spec,
                            AdjustStrategy strategy, std::size_t n_remove,
                            std::uint64_t seed,
                            const ImpactScorer& scorer = {});

struct CellKey {
  std::string method;
  double gamma = 0.0;
  int group_size = 0;
  double beta = 0.0;
  double threshold = 0.0;

  auto operator<=>(const CellKey&) const = default;
  bool operator==(const CellKey&) const = default;
};

struct MetricRow {
  CellKey key;
  double ioip = 0.0;
  double dtne = 0.0;
};

struct AggregateRow {
  CellKey key;
  double ioip_mean = 0.0, ioip_se = 0.0;
  double dtne_mean = 0.0, dtne_se = 0.0;
  std::size_t n_specs = 0;
};

// Mean and standard error (sample sd / sqrt(n), 0 for n = 1) per cell,
// ordered by key.
std::vector<AggregateRow> Aggregate(std::span<const MetricRow> rows);

std::string CurveCsvHeader();
std::string CurveCsv(std::span<const AggregateRow> rows);
std::vector<AggregateRow> ParseCurveCsv(const std::string& text);

// DtNE on x, IoIP on y, one polyline per method ordered by DtNE.
std::string RenderCurveSvg(std::span<const AggregateRow> rows,
                           const std::string& title);

}  // namespace nirec

#endif  // NIREC_EVALX_H_
