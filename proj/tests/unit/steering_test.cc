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


#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "nirec/steering.h"
#include "test_util.h"

namespace nirec {
namespace {

using testing::MakeMicroInstance;
using testing::MicroInstance;

NeighborExperience Neighbor(UserId u, std::uint8_t o_ex, double r_target,
                            double r_kth, double r_next) {
  NeighborExperience n;
  n.user = u;
  n.o_ex = o_ex;
  n.r_target = r_target;
  n.r_kth = r_kth;
  n.r_next = r_next;
  return n;
}

EmbeddingTable ItemLine(const std::vector<double>& item_scores) {
  // One user with e_u = 1 so that score(0, i) = item_scores[i].
  EmbeddingTable t;
  t.users = Matrix::Ones(1, 1);
  t.items = Matrix(static_cast<Eigen::Index>(item_scores.size()), 1);
  for (std::size_t i = 0; i < item_scores.size(); ++i) t.items(i, 0) = item_scores[i];
  return t;
}

TEST(Experience, TopItemIsExposed) {
  const auto t = ItemLine({5.0, 1.0, 2.0, 3.0});
  const std::vector<UserId> nb{0};
  const auto ctx = BuildExperience(t, 2, 0, nb);
  EXPECT_EQ(ctx.neighbors[0].o_ex, 1);
  EXPECT_EQ(ctx.neighbors[0].top, (std::vector<ItemId>{0, 3, 2}));
}

TEST(Experience, RankKPlusOneBoundary) {
  const auto t = ItemLine({5.0, 1.0, 2.0, 3.0});
  const std::vector<UserId> nb{0};
  const auto ctx = BuildExperience(t, 2, 2, nb);  // item 2 ranked third
  EXPECT_EQ(ctx.neighbors[0].o_ex, 0);
  EXPECT_DOUBLE_EQ(Cost(ctx, 0, 1), 3.0 - 2.0);
  EXPECT_DOUBLE_EQ(Cost(ctx, 0, 0), 0.0);
}

TEST(Experience, NeedsKPlusOneItems) {
  const std::vector<UserId> nb{0};
  EXPECT_NO_THROW(BuildExperience(ItemLine({1, 2, 3}), 2, 0, nb));
  EXPECT_THROW(BuildExperience(ItemLine({1, 2}), 2, 0, nb), InputError);
}

TEST(Cost, Examples) {
  ExperienceContext ctx;
  ctx.neighbors = {Neighbor(0, 1, 4.0, 4.5, 3.2), Neighbor(1, 0, 3.5, 3.5, 3.0)};
  EXPECT_DOUBLE_EQ(Cost(ctx, 0, 1), 0.0);
  EXPECT_NEAR(Cost(ctx, 0, 0), 0.8, 1e-12);
  EXPECT_DOUBLE_EQ(Cost(ctx, 1, 1), 0.0);
  EXPECT_DOUBLE_EQ(TotalCost(ctx, ctx.DefaultBits()), 0.0);
  const std::vector<std::uint8_t> bad{1};
  EXPECT_THROW(TotalCost(ctx, bad), InputError);
}

TEST(Cost, NonNegativeOnRandomContexts) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = MakeMicroInstance(seed);
    for (std::size_t j = 0; j < m.ctx.neighbors.size(); ++j) {
      EXPECT_GE(Cost(m.ctx, j, 0), 0.0);
      EXPECT_GE(Cost(m.ctx, j, 1), 0.0);
      EXPECT_EQ(Cost(m.ctx, j, m.ctx.neighbors[j].o_ex), 0.0);
    }
  }
}

// Three users: target 0 trusts neighbors 1 and 2. 2-d oracle embeddings.
struct HandWorld {
  SimOracle oracle;
  TargetSpec spec;
  ExperienceContext ctx;
  HandWorld() {
    oracle.embeddings.users = Matrix(3, 2);
    oracle.embeddings.items = Matrix(1, 2);
    oracle.embeddings.users << 1.0, 0.5, 2.0, 1.0, 0.5, 0.5;
    oracle.embeddings.items << 1.0, 1.0;
    oracle.beta = 2.0;
    const std::vector<std::pair<UserId, UserId>> e{{0, 1}, {0, 2}};
    oracle.graph = std::make_shared<const SocialGraph>(3, e);
    spec.target_item = 0;
    spec.target_users = {0};
    spec.neighbor_users = {1, 2};
    ctx.target_item = 0;
    ctx.neighbors = {Neighbor(1, 0, 2.0, 2.6, 1.5), Neighbor(2, 1, 1.9, 1.8, 1.2)};
  }
};

TEST(Objective, HandComputedValue) {
  HandWorld w;
  OraclePredictor pred(w.oracle);
  SteeringProblem prob(pred, w.spec, w.ctx);
  // eta(0) = 1.5 - 3, eta(1) = 0, eta(2) = -2; e0.e1 = 2.5, e0.e2 = 0.75.
  const double eta0 = -1.5;
  const double c2 = 1.0 / (1.0 + std::exp(-0.75)) * -2.0;
  const double gamma = 0.3;
  for (std::uint8_t b1 : {0, 1}) {
    for (std::uint8_t b2 : {0, 1}) {
      const std::vector<std::uint8_t> bits{b1, b2};
      const double delta = (b2 ? c2 : 0.0) / std::sqrt(2.0);  // eta(1) = 0
      const double steer = 1.0 / (1.0 + std::exp(-(eta0 + 2.0 * delta)));
      const double cost = (b1 ? 2.6 - 2.0 : 0.0) + (b2 ? 0.0 : 1.9 - 1.2);
      const auto v = prob.Evaluate(bits, gamma);
      EXPECT_NEAR(v.steering_sum, steer, 1e-12);
      EXPECT_NEAR(v.damage, cost, 1e-12);
      EXPECT_NEAR(v.value, steer - gamma * cost, 1e-12);
    }
  }
  const auto zero = prob.Evaluate(w.ctx.DefaultBits(), 0.0);
  EXPECT_DOUBLE_EQ(zero.value, zero.steering_sum);
  EXPECT_DOUBLE_EQ(zero.damage, 0.0);
}

TEST(Objective, TargetsInsideGroupAreExposedAndAmbientIsRead) {
  // Targets 0 and 1; 0 trusts 1 (in U*) and 2 (bit); 2 trusts 3 (ambient).
  SimOracle o = testing::RandomOracle(
      std::make_shared<const SocialGraph>(
          4, std::vector<std::pair<UserId, UserId>>{{0, 1}, {0, 2}, {1, 3}}),
      2, 2, 10.0, 5);
  TargetSpec spec{.target_item = 1, .target_users = {0, 1},
                  .neighbor_users = {2, 3}};
  ExperienceContext ctx;
  ctx.target_item = 1;
  ctx.neighbors = {Neighbor(2, 0, 1, 2, 0), Neighbor(3, 0, 1, 2, 0)};
  OraclePredictor pred(o);
  SteeringProblem p(pred, spec, ctx);
  const std::vector<std::uint8_t> bits{1, 0};
  EXPECT_EQ(p.TargetTreatments(0, bits), (std::vector<std::uint8_t>{1, 1}));
  EXPECT_EQ(p.TargetTreatments(1, bits), (std::vector<std::uint8_t>{0}));

  // A neighbor left out of the searchable set follows the ambient matrix.
  TargetSpec partial{.target_item = 1, .target_users = {1}, .neighbor_users = {}};
  ExperienceContext empty;
  empty.target_item = 1;
  ExposureMatrix ambient(4, 2);
  ambient.Insert(3, 1);
  SteeringProblem with_ambient(pred, partial, empty, &ambient);
  SteeringProblem without(pred, partial, empty);
  EXPECT_EQ(with_ambient.TargetTreatments(0, {}), std::vector<std::uint8_t>{1});
  EXPECT_EQ(without.TargetTreatments(0, {}), std::vector<std::uint8_t>{0});
  EXPECT_THROW(SteeringProblem(pred, spec, empty), InputError);
}

TEST(Greedy, HarmfulFlipsLeaveDefault) {
  auto m = MakeMicroInstance(3);
  // Every deviation costs a lot at huge gamma.
  NIRecPredictor pred(m.model);
  SteeringProblem p(pred, m.spec, m.ctx);
  const auto a = p.Greedy(1e6);
  EXPECT_EQ(a.bits, m.ctx.DefaultBits());
  EXPECT_TRUE(a.frozen.empty());
  EXPECT_EQ(a.evaluations, 1 + p.num_bits());
}

// Predictor whose output ignores treatments: flips interact only through
// the separable cost, so greedy must find the exact optimum.
class SeparablePredictor final : public OutcomePredictor {
 public:
  SeparablePredictor(const SocialGraph& g, std::vector<double> gain)
      : g_(&g), gain_(std::move(gain)) {}
  double Predict(UserId u, ItemId, std::span<const std::uint8_t> t) const override {
    const auto nb = g_->Neighbors(u);
    double z = -0.5;
    for (std::size_t k = 0; k < nb.size(); ++k) z += t[k] * gain_[nb[k]];
    return z;  // linear, so the sum over targets is separable per neighbor
  }
  const SocialGraph& graph() const override { return *g_; }

 private:
  const SocialGraph* g_;
  std::vector<double> gain_;
};

TEST(Greedy, ExactOnSeparableObjectives) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto m = MakeMicroInstance(seed);
    std::mt19937_64 rng(seed + 100);
    std::vector<double> gain(m.graph->num_users());
    for (auto& x : gain) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    SeparablePredictor pred(*m.graph, gain);
    SteeringProblem p(pred, m.spec, m.ctx);
    for (double gamma : {0.0, 0.2, 1.0}) {
      const auto g = p.Greedy(gamma);
      const auto b = p.BruteForce(gamma);
      EXPECT_NEAR(g.breakdown.value, b.breakdown.value, 1e-12) << seed;
    }
  }
}

TEST(Greedy, StructuralInvariants) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto m = MakeMicroInstance(seed);
    NIRecPredictor pred(m.model);
    SteeringProblem p(pred, m.spec, m.ctx);
    const std::size_t n = p.num_bits();
    for (double gamma : {0.0, 0.5}) {
      const auto a = p.Greedy(gamma);
      std::set<std::size_t> seen(a.frozen.begin(), a.frozen.end());
      EXPECT_EQ(seen.size(), a.frozen.size());
      EXPECT_LE(a.evaluations, n * (n + 1) / 2 + n);
      const auto init = p.Evaluate(m.ctx.DefaultBits(), gamma);
      EXPECT_GE(a.breakdown.value, init.value);
      // Frozen indices are exactly the flipped ones.
      const auto def = m.ctx.DefaultBits();
      for (std::size_t j = 0; j < n; ++j)
        EXPECT_EQ(a.bits[j] != def[j], seen.contains(j));
      const auto re = p.Evaluate(a.bits, gamma);
      EXPECT_NEAR(re.value, a.breakdown.value, 1e-12);
    }
  }
}

// Independent enumeration: Gray-code order, strict comparison keeping the
// lexicographically smaller assignment on ties.
std::pair<std::vector<std::uint8_t>, double> Enumerate(const SteeringProblem& p,
                                                       double gamma) {
  const std::size_t n = p.num_bits();
  std::vector<std::uint8_t> best;
  double best_v = -1e300;
  for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) {
    const std::uint64_t gray = i ^ (i >> 1);
    std::vector<std::uint8_t> bits(n);
    for (std::size_t j = 0; j < n; ++j) bits[j] = (gray >> j) & 1;
    const double v = p.Evaluate(bits, gamma).value;
    if (v > best_v || (v == best_v && bits < best)) {
      best_v = v;
      best = bits;
    }
  }
  return {best, best_v};
}

TEST(BruteForce, MatchesIndependentEnumeration) {
  int twelve = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto m = MakeMicroInstance(seed);
    NIRecPredictor pred(m.model);
    SteeringProblem p(pred, m.spec, m.ctx);
    twelve += p.num_bits() == 12;
    for (double gamma : {0.0, 0.3}) {
      const auto [bits, v] = Enumerate(p, gamma);
      const auto b = p.BruteForce(gamma);
      EXPECT_EQ(b.bits, bits);
      EXPECT_EQ(b.breakdown.value, v);
      EXPECT_EQ(b.evaluations, std::size_t{1} << p.num_bits());
    }
  }
  EXPECT_GT(twelve, 0);
}

TEST(BruteForce, TinyCases) {
  HandWorld w;
  OraclePredictor pred(w.oracle);
  TargetSpec none{.target_item = 0, .target_users = {1}, .neighbor_users = {}};
  ExperienceContext empty;
  empty.target_item = 0;
  SteeringProblem p0(pred, none, empty);
  const auto a = p0.BruteForce(0.0);
  EXPECT_TRUE(a.bits.empty());
  EXPECT_DOUBLE_EQ(a.breakdown.steering_sum, Sigmoid(w.oracle.Eta(1, 0)));

  TargetSpec one{.target_item = 0, .target_users = {0}, .neighbor_users = {1, 2}};
  SteeringProblem p(pred, one, w.ctx);
  const auto b = p.BruteForce(0.1);
  double best = -1e9;
  for (int m = 0; m < 4; ++m)
    best = std::max(best, p.Evaluate(std::vector<std::uint8_t>{
                                         std::uint8_t(m >> 1), std::uint8_t(m & 1)},
                                     0.1).value);
  EXPECT_EQ(b.breakdown.value, best);
}

TEST(BruteForce, RefusesTooManyBits) {
  std::vector<std::pair<UserId, UserId>> e;
  for (UserId v = 1; v <= 21; ++v) e.emplace_back(0, v);
  auto g = std::make_shared<const SocialGraph>(22, e);
  auto model = MakeNIRecModel(22, 12, 2, g, 1);
  TargetSpec spec{.target_item = 0, .target_users = {0}};
  spec.neighbor_users = NeighborUnion(*g, spec.target_users);
  const auto ctx = BuildExperience(model.embeddings, 10, 0, spec.neighbor_users);
  NIRecPredictor pred(model);
  SteeringProblem p(pred, spec, ctx);
  EXPECT_THROW(p.BruteForce(0.0), InputError);
  EXPECT_NO_THROW(p.Greedy(0.0));
}

TEST(Sweep, GridSemantics) {
  auto m = MakeMicroInstance(7);
  NIRecPredictor pred(m.model);
  SteeringProblem p(pred, m.spec, m.ctx);
  const std::vector<double> zero{0.0};
  const auto one = SweepGamma(p, zero);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].assignment.bits, p.Greedy(0.0).bits);
  const std::vector<double> grid{0.0, 0.5, 1e6};
  const auto s = SweepGamma(p, grid);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[2].assignment.breakdown.damage, 0.0);
  EXPECT_EQ(s[2].assignment.bits, m.ctx.DefaultBits());
  const std::vector<double> descending{1.0, 0.0};
  EXPECT_THROW(SweepGamma(p, descending), InputError);
  EXPECT_THROW(SweepGamma(p, {}), InputError);
}

TEST(Sweep, BruteForceScalarizationIsMonotone) {
  const auto grid = GammaGrid(0.0, 2.0, 0.1);
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    auto m = MakeMicroInstance(seed);
    NIRecPredictor pred(m.model);
    SteeringProblem p(pred, m.spec, m.ctx);
    ObjectiveBreakdown prev{.steering_sum = 1e300, .damage = 1e300};
    for (double g : grid) {
      const auto b = p.BruteForce(g).breakdown;
      EXPECT_LE(b.damage, prev.damage) << seed << " " << g;
      EXPECT_LE(b.steering_sum, prev.steering_sum) << seed << " " << g;
      prev = b;
    }
  }
}

TEST(GammaGrid, InclusiveEnds) {
  const auto g = GammaGrid(0.0, 2.0, 0.1);
  ASSERT_EQ(g.size(), 21u);
  EXPECT_DOUBLE_EQ(g.front(), 0.0);
  EXPECT_DOUBLE_EQ(g.back(), 2.0);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  EXPECT_THROW(GammaGrid(0, 1, 0), InputError);
}

TEST(DirectBaseline, SignAndTieRules) {
  // Backbone: neighbor scores 1.0 (likes), -1.0 (dislikes), 0.0 (tie).
  EmbeddingTable bb;
  bb.users = Matrix(4, 1);
  bb.items = Matrix::Ones(1, 1);
  bb.users << 0.0, 1.0, -1.0, 0.0;
  TargetSpec spec{.target_item = 0, .target_users = {0}, .neighbor_users = {1, 2, 3}};
  ExperienceContext ctx;
  ctx.target_item = 0;
  ctx.neighbors = {Neighbor(1, 0, 1, 2, 0), Neighbor(2, 1, 2, 3, 1),
                   Neighbor(3, 1, 2, 3, 1)};
  const auto a = DirectBaseline(bb, spec, ctx, 0.0);
  EXPECT_EQ(a.bits, (std::vector<std::uint8_t>{1, 0, 1}));
  ctx.neighbors[2].o_ex = 0;
  EXPECT_EQ(DirectBaseline(bb, spec, ctx, 0.0).bits[2], 0);
  EXPECT_EQ(DirectBaseline(bb, spec, ctx, 1e6).bits, ctx.DefaultBits());
}

TEST(SimBaseline, OracleEmbeddingsReproduceOracle) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    auto m = MakeMicroInstance(seed);
    SimOracle o{m.model.embeddings, 10.0, m.graph};
    OraclePredictor pred(o);
    SteeringProblem p(pred, m.spec, m.ctx);
    for (double gamma : {0.0, 0.4}) {
      const auto sim = SimBaseline(m.model.embeddings, m.spec, m.ctx, gamma,
                                   10.0, m.graph);
      EXPECT_EQ(sim.bits, p.Greedy(gamma).bits);
    }
    // No interference: flips only cost, so the default stands at gamma > 0.
    const auto flat = SimBaseline(m.model.embeddings, m.spec, m.ctx, 0.1, 0.0,
                                  m.graph);
    EXPECT_EQ(flat.bits, m.ctx.DefaultBits());
  }
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::kNIRec, Method::kOracle, Method::kDirectMF,
                   Method::kSimMF, Method::kDirectLGC, Method::kSimLGC}) {
    EXPECT_EQ(ParseMethod(MethodName(m)), m);
  }
  EXPECT_THROW(ParseMethod("DiffNet"), InputError);
}

}  // namespace
}  // namespace nirec
