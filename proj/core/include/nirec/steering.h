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

#ifndef NIREC_STEERING_H_
#define NIREC_STEERING_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nirec/backbones.h"
#include "nirec/estimator.h"
#include "nirec/simworld.h"

namespace nirec {

// Probability of a positive potential outcome for (u, i) given the
// treatments of N_u (aligned with graph().Neighbors(u)).
class OutcomePredictor {
 public:
  virtual ~OutcomePredictor() = default;
  virtual double Predict(UserId u, ItemId i,
                         std::span<const std::uint8_t> treatments) const = 0;
  virtual const SocialGraph& graph() const = 0;
};

class NIRecPredictor final : public OutcomePredictor {
 public:
  explicit NIRecPredictor(const NIRecModel& model) : model_(&model) {}
  double Predict(UserId u, ItemId i,
                 std::span<const std::uint8_t> treatments) const override {
    return PredictPotential(*model_, u, i, treatments);
  }
  const SocialGraph& graph() const override { return *model_->graph; }

 private:
  const NIRecModel* model_;
};

// The feedback generator itself. With backbone embeddings in place of the
// simulated ones this is also the Sim baseline's surrogate.
class OraclePredictor final : public OutcomePredictor {
 public:
  explicit OraclePredictor(const SimOracle& oracle) : oracle_(&oracle) {}
  double Predict(UserId u, ItemId i,
                 std::span<const std::uint8_t> treatments) const override {
    return oracle_->OutcomeProb(u, i, treatments);
  }
  const SocialGraph& graph() const override { return *oracle_->graph; }

 private:
  const SimOracle* oracle_;
};

struct NeighborExperience {
  UserId user = 0;
  std::vector<ItemId> top;  // top-(k+1) under the experience model
  double r_target = 0.0;    // r^ex(u', i*)
  double r_kth = 0.0;       // r^ex of the k-th item
  double r_next = 0.0;      // r^ex of the (k+1)-th item
  std::uint8_t o_ex = 0;    // i* within the top k
};

struct ExperienceContext {
  int k = 10;
  ItemId target_item = 0;
  std::vector<NeighborExperience> neighbors;  // aligned with N_{U*}

  std::vector<std::uint8_t> DefaultBits() const;
};

// Top-(k+1) lists are computed once per neighbor from the experience model's
// scores. Throws InputError when fewer than k+1 items exist.
ExperienceContext BuildExperience(const EmbeddingTable& experience_model, int k,
                                  ItemId target_item,
                                  std::span<const UserId> neighbors);

// Damage to neighbor `index` when its treatment is `bit`:
//   bit == o_ex            -> 0
//   bit = 0, o_ex = 1      -> r(i*) - r((k+1)-th)
//   bit = 1, o_ex = 0      -> r(k-th) - r(i*)
double Cost(const ExperienceContext& ctx, std::size_t index, std::uint8_t bit);
double TotalCost(const ExperienceContext& ctx, std::span<const std::uint8_t> bits);

struct ObjectiveBreakdown {
  double steering_sum = 0.0;
  double damage = 0.0;
  double gamma = 0.0;
  double value = 0.0;  // steering_sum - gamma * damage
};

struct TreatmentAssignment {
  std::vector<std::uint8_t> bits;  // aligned with spec.neighbor_users
  std::vector<std::size_t> frozen;  // indices in reassignment order
  ObjectiveBreakdown breakdown;
  std::size_t evaluations = 0;
};

// Bi-objective over the neighbor bits of one target spec. Each target
// user's treatments come from: 1 for neighbors inside U*, the bit for
// neighbors in N_{U*}, and `ambient` (if given, else 0) for anyone else.
class SteeringProblem {
 public:
  SteeringProblem(const OutcomePredictor& predictor, const TargetSpec& spec,
                  const ExperienceContext& ctx,
                  const ExposureMatrix* ambient = nullptr);

  std::size_t num_bits() const { return spec_->neighbor_users.size(); }
  const TargetSpec& spec() const { return *spec_; }
  const ExperienceContext& context() const { return *ctx_; }

  // Per-target treatments for the given bits.
  std::vector<std::uint8_t> TargetTreatments(
      std::size_t target_index, std::span<const std::uint8_t> bits) const;

  ObjectiveBreakdown Evaluate(std::span<const std::uint8_t> bits,
                              double gamma) const;

  // Greedy search from o_ex: flip the non-frozen index with the largest
  // strict increase (lowest index on ties), freeze it, repeat until no flip
  // improves or every index is frozen. Flips re-score only the targets that
  // have the flipped neighbor.
  TreatmentAssignment Greedy(double gamma) const;

  // Exhaustive maximizer, ties to the lexicographically smallest bits.
  // Throws InputError above 20 bits.
  TreatmentAssignment BruteForce(double gamma) const;

 private:
  struct Slot {
    enum Kind : std::uint8_t { kTarget, kBit, kAmbient } kind;
    std::uint32_t index;  // bit index for kBit
    std::uint8_t ambient;
  };

  const OutcomePredictor* predictor_;
  const TargetSpec* spec_;
  const ExperienceContext* ctx_;
  std::vector<std::vector<Slot>> slots_;  // per target, aligned with N_u*
  // bit index -> (target index, neighbor position)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> affected_;
};

inline constexpr std::size_t kMaxBruteForceBits = 20;

struct SweepRecord {
  double gamma = 0.0;
  TreatmentAssignment assignment;
  double wall_ms = 0.0;
};

// Independent greedy run per gamma; the grid must be nonempty and ascending.
std::vector<SweepRecord> SweepGamma(const SteeringProblem& problem,
                                    std::span<const double> gamma_grid);

// Gamma grid lo, lo+step, ..., hi (inclusive within rounding).
std::vector<double> GammaGrid(double lo, double hi, double step);

// Separable Direct heuristic: per neighbor, o = 1 iff
// (sigmoid(e_u'.e_i*) - 0.5) - gamma (cost(1) - cost(0)) > 0, o_ex on a tie.
TreatmentAssignment DirectBaseline(const EmbeddingTable& backbone,
                                   const TargetSpec& spec,
                                   const ExperienceContext& ctx, double gamma);

// Greedy over the generator's functional form evaluated with backbone
// embeddings and the configured beta.
TreatmentAssignment SimBaseline(const EmbeddingTable& backbone,
                                const TargetSpec& spec,
                                const ExperienceContext& ctx, double gamma,
                                double beta,
                                std::shared_ptr<const SocialGraph> graph);

enum class Method { kNIRec, kOracle, kDirectMF, kSimMF, kDirectLGC, kSimLGC };

std::string_view MethodName(Method m);
// Throws InputError on an unknown tag.
Method ParseMethod(std::string_view name);

}  // namespace nirec

#endif  // NIREC_STEERING_H_
