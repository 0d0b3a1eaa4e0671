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

#ifndef NIREC_SIMWORLD_H_
#define NIREC_SIMWORLD_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nirec/backbones.h"
#include "nirec/common.h"
#include "nirec/corpus.h"

namespace nirec {

// Set of exposed (user, item) units, o_ui = 1.
class ExposureMatrix {
 public:
  ExposureMatrix() = default;
  ExposureMatrix(UserId n_users, ItemId n_items)
      : n_users_(n_users), n_items_(n_items) {}

  void Insert(UserId u, ItemId i);
  bool Contains(UserId u, ItemId i) const {
    return keys_.contains(PackPair(u, i));
  }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  UserId num_users() const { return n_users_; }
  ItemId num_items() const { return n_items_; }

  // Packed (user << 32 | item) keys in ascending (user, item) order.
  std::vector<std::uint64_t> SortedKeys() const;

 private:
  UserId n_users_ = 0;
  ItemId n_items_ = 0;
  std::unordered_set<std::uint64_t> keys_;
};

// o_{u'i} for each u' in N_u, in neighbor order.
std::vector<std::uint8_t> NeighborTreatments(const SocialGraph& graph,
                                             const ExposureMatrix& exposure,
                                             UserId u, ItemId i);

// Ground-truth feedback world. Interest is linear in the simulated
// embeddings, eta = e_u . e_i - 3, so a simulated rating above 3 reads as
// "likes".
struct SimOracle {
  EmbeddingTable embeddings;
  double beta = 10.0;
  std::shared_ptr<const SocialGraph> graph;

  double Eta(UserId u, ItemId i) const { return embeddings.Score(u, i) - 3.0; }

  // (1/sqrt|N_u|) sum_{u' in N_u} o_{u'i} sigmoid(e_u . e_u') eta(u', i);
  // `treatments` is aligned with graph->Neighbors(u).
  double Delta(UserId u, ItemId i,
               std::span<const std::uint8_t> treatments) const;
  double Delta(UserId u, ItemId i, const ExposureMatrix& exposure) const;

  double OutcomeProb(UserId u, ItemId i,
                     std::span<const std::uint8_t> treatments) const {
    return Sigmoid(Eta(u, i) + beta * Delta(u, i, treatments));
  }
  double OutcomeProb(UserId u, ItemId i, const ExposureMatrix& exposure) const {
    return Sigmoid(Eta(u, i) + beta * Delta(u, i, exposure));
  }

  // Term contributed by neighbor u' of u to Delta(u, i) when u' is exposed.
  double NeighborContribution(UserId u, UserId neighbor, ItemId i) const;

  SimOracle WithGraph(std::shared_ptr<const SocialGraph> g) const {
    return {embeddings, beta, std::move(g)};
  }
};

struct PropensityParams {
  double alpha1 = 0.6;  // individual interest, p1 = sigmoid(eta)
  double alpha2 = 0.2;  // randomness, p2 ~ U(0, 1) per pair
  double alpha3 = 0.2;  // social, p3 = min(1, exposed neighbors / saturation)
  std::size_t target_size = 0;         // |D|
  std::size_t target_influential = 0;  // 0 disables the alpha3 search
  int rounds = 10;
  double saturation = 5.0;
  double propensity_floor = 1e-6;
  int max_restarts = 24;
  double size_tolerance = 0.01;
  double influential_tolerance = 0.05;

  void Validate() const;
};

struct ExposureDiagnostics {
  std::size_t achieved_size = 0;
  std::size_t achieved_influential = 0;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0;  // weights actually used
  int restarts = 0;
  bool size_matched = false;
  bool influential_matched = false;
  std::string note;
};

struct ExposureSample {
  ExposureMatrix exposure;
  ExposureDiagnostics diagnostics;
};

// Draws |D| = target_size exposures. Each round, propensities are
// recomputed (p3 reacts to the previous round's exposures) and the pairs
// with the smallest u / propensity ratios are exposed, where u is a fixed
// per-pair uniform; this is the scale bisection solved exactly. When a
// target influential count is given, alpha3 is bisected across restarts
// with alpha1:alpha2 held in proportion. Never throws on a miss: the best
// attempt comes back with diagnostics.
ExposureSample SampleExposure(const SimOracle& oracle,
                              const PropensityParams& params,
                              std::uint64_t seed);

struct SemiSyntheticRecord {
  UserId user = 0;
  ItemId item = 0;
  int y = 0;
  double truth_prob = 0.0;

  friend bool operator==(const SemiSyntheticRecord&,
                         const SemiSyntheticRecord&) = default;
};

// y ~ Bernoulli(outcome_prob) for each exposed pair in (user, item) order.
std::vector<SemiSyntheticRecord> GenerateFeedback(const SimOracle& oracle,
                                                  const ExposureMatrix& exposure,
                                                  std::uint64_t seed);

struct TargetSpec {
  ItemId target_item = 0;
  std::vector<UserId> target_users;    // U*, ascending
  std::vector<UserId> neighbor_users;  // N_{U*} \ U*, ascending
  double threshold = 1.0;

  friend bool operator==(const TargetSpec&, const TargetSpec&) = default;
};

struct TargetSelection {
  std::vector<TargetSpec> specs;
  std::size_t examined = 0;
  std::size_t rejected = 0;
};

// Union of N_u over the group, minus the group itself, ascending.
std::vector<UserId> NeighborUnion(const SocialGraph& graph,
                                  std::span<const UserId> group);

// True iff eta(u, i) <= t and some neighbor has eta(u', i) > 0.
bool QualifiesAsTarget(const SimOracle& oracle, UserId u, ItemId i, double t);

// Rejection sampling without replacement over items; an item is accepted
// when at least group_size users qualify. Throws InputError with the
// rejection tally if nothing is accepted.
TargetSelection SelectTargets(const SimOracle& oracle, int group_size,
                              double threshold, int n_items_wanted,
                              std::uint64_t seed);

// Empty string when the spec satisfies its invariants against the oracle,
// otherwise a description of the first violation.
std::string ValidateTargetSpec(const TargetSpec& spec, const SimOracle& oracle);

struct SemiSyntheticHeader {
  std::uint64_t seed = 0;
  double beta = 0;
  PropensityParams propensity;
  ExposureDiagnostics diagnostics;
};

void SaveSemiSynthetic(const std::filesystem::path& path,
                       const SemiSyntheticHeader& header,
                       std::span<const SemiSyntheticRecord> records);
std::vector<SemiSyntheticRecord> LoadSemiSynthetic(
    const std::filesystem::path& path, SemiSyntheticHeader* header = nullptr);

void SaveTargetSpecs(const std::filesystem::path& path,
                     std::span<const TargetSpec> specs);
std::vector<TargetSpec> LoadTargetSpecs(const std::filesystem::path& path);

void SaveOracle(const SimOracle& oracle, const std::filesystem::path& path);
// The graph is not stored in the file; the caller supplies it.
SimOracle LoadOracle(const std::filesystem::path& path,
                     std::shared_ptr<const SocialGraph> graph);

}  // namespace nirec

#endif  // NIREC_SIMWORLD_H_
