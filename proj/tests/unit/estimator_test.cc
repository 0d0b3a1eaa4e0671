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


#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nirec/estimator.h"
#include "test_util.h"

namespace nirec {
namespace {

using testing::RandomGraph;

std::shared_ptr<const SocialGraph> Graph(
    UserId n, std::vector<std::pair<UserId, UserId>> edges) {
  return std::make_shared<const SocialGraph>(n, edges);
}

NIRecModel ZeroModel(UserId n_users, ItemId n_items, int dim,
                     std::shared_ptr<const SocialGraph> g) {
  NIRecModel m;
  m.embeddings.users = Matrix::Zero(n_users, dim);
  m.embeddings.items = Matrix::Zero(n_items, dim);
  m.W = Matrix::Zero(dim, dim);
  m.w = Vector::Zero(2 * dim);
  m.graph = std::move(g);
  return m;
}

TEST(IndividualRep, Examples) {
  auto m = ZeroModel(2, 1, 2, Graph(2, {}));
  m.embeddings.items.row(0) << 3.0, -1.0;
  EXPECT_TRUE(IndividualRep(m, 0, 0).isZero());
  m.embeddings.users.row(0) << 1.0, 1.0;
  EXPECT_EQ(IndividualRep(m, 0, 0), Vector(m.embeddings.items.row(0).transpose()));
  m.embeddings.users.row(1) << 1.0, 2.0;
  EXPECT_EQ(IndividualRep(m, 1, 0), (Vector(2) << 3.0, -2.0).finished());
}

TEST(Attention, SingleNeighborIsOne) {
  auto m = ZeroModel(2, 1, 2, Graph(2, {{0, 1}}));
  m.embeddings.users.row(0) << 0.3, -0.7;
  m.embeddings.users.row(1) << 1.1, 0.4;
  m.w << 0.2, 0.5, -0.3, 0.9;
  bool degenerate = true;
  EXPECT_DOUBLE_EQ(AttentionWeight(m, 0, 1, &degenerate), 1.0);
  EXPECT_FALSE(degenerate);
  EXPECT_THROW(AttentionWeight(m, 1, 0), InputError);
}

TEST(Attention, SymmetricNeighborsSplitEvenly) {
  auto m = ZeroModel(3, 1, 1, Graph(3, {{0, 1}, {0, 2}}));
  m.embeddings.users << 1.0, 2.0, 2.0;
  m.w << 0.4, 0.6;
  const auto a = AttentionWeights(m, 0);
  EXPECT_DOUBLE_EQ(a.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(a.weights[1], 0.5);
}

TEST(Attention, CancellationFallsBackToUniform) {
  // Numerators w.[e_u || e_v] = 2 and -2.
  auto m = ZeroModel(3, 1, 1, Graph(3, {{0, 1}, {0, 2}}));
  m.embeddings.users << 0.0, 2.0, -2.0;
  m.w << 0.0, 1.0;
  const auto a = AttentionWeights(m, 0);
  EXPECT_TRUE(a.degenerate);
  EXPECT_DOUBLE_EQ(a.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(a.weights[1], 0.5);
  bool flag = false;
  EXPECT_DOUBLE_EQ(AttentionWeight(m, 0, 2, &flag), 0.5);
  EXPECT_TRUE(flag);
}

TEST(Attention, LinearNotSoftmax) {
  auto m = ZeroModel(3, 1, 1, Graph(3, {{0, 1}, {0, 2}}));
  m.embeddings.users << 0.0, 3.0, -1.0;  // numerators 3 and -1, sum 2
  m.w << 0.0, 1.0;
  const auto a = AttentionWeights(m, 0);
  EXPECT_DOUBLE_EQ(a.weights[0], 1.5);
  EXPECT_DOUBLE_EQ(a.weights[1], -0.5);
}

TEST(Attention, WeightsSumToOne) {
  const auto g = RandomGraph(40, 0.15, 6);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = MakeNIRecModel(40, 5, 3, g, seed, 0.5, 0.3);
    for (UserId u = 0; u < 40; ++u) {
      const auto a = AttentionWeights(m, u);
      if (a.weights.empty()) continue;
      double sum = 0;
      for (double x : a.weights) sum += x;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Predict, DependsOnTreatmentsOnlyThroughInterference) {
  // Twin neighbors: treating either one yields the same g and the same
  // prediction, bit for bit.
  auto m = ZeroModel(3, 1, 2, Graph(3, {{0, 1}, {0, 2}}));
  m.embeddings.users << 0.4, -0.2, 1.3, 0.7, 1.3, 0.7;
  m.embeddings.items << 0.9, -1.1;
  m.w << 0.2, 0.1, 0.5, 0.3;
  m.W << 0.7, -0.4, 1.2, 0.3;
  const std::vector<std::uint8_t> a{1, 0}, b{0, 1};
  EXPECT_EQ(InterferenceRep(m, 0, 0, a), InterferenceRep(m, 0, 0, b));
  EXPECT_EQ(PredictPotential(m, 0, 0, a), PredictPotential(m, 0, 0, b));
  const double p = PredictPotential(m, 0, 0, a);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
}

TEST(InterferenceRep, MaskAndHandSum) {
  auto m = ZeroModel(3, 1, 2, Graph(3, {{0, 1}, {0, 2}}));
  m.embeddings.users << 0.5, 1.0, 1.0, 2.0, -0.5, 3.0;
  m.embeddings.items << 2.0, -1.0;
  m.w << 0.1, 0.2, 0.7, 0.3;
  m.W = Matrix::Identity(2, 2);
  const std::vector<std::uint8_t> none{0, 0}, both{1, 1}, first{1, 0};
  EXPECT_TRUE(InterferenceRep(m, 0, 0, none).isZero());
  const auto a = AttentionWeights(m, 0);
  const Vector e_i = m.embeddings.items.row(0).transpose();
  const Vector v1 = m.embeddings.users.row(1).transpose().cwiseProduct(e_i);
  const Vector v2 = m.embeddings.users.row(2).transpose().cwiseProduct(e_i);
  EXPECT_TRUE(InterferenceRep(m, 0, 0, both).isApprox(a.weights[0] * v1 + a.weights[1] * v2));
  m.W << 1.0, 2.0, -1.0, 0.5;
  EXPECT_TRUE(InterferenceRep(m, 0, 0, first).isApprox(m.W * (a.weights[0] * v1)));
  EXPECT_TRUE(InterferenceRep(m, 1, 0, std::span<const std::uint8_t>{}).isZero());
}

TEST(InterferenceRep, SingleNeighborIsWTimesProduct) {
  auto m = ZeroModel(2, 1, 2, Graph(2, {{0, 1}}));
  m.embeddings.users.row(1) << 1.5, -2.0;
  m.embeddings.items.row(0) << 0.5, 1.0;
  m.w << 0.3, 0.3, 0.3, 0.3;
  m.W << 1.0, 1.0, 0.0, 2.0;
  const std::vector<std::uint8_t> on{1};
  const Vector v = (Vector(2) << 0.75, -2.0).finished();
  EXPECT_TRUE(InterferenceRep(m, 0, 0, on).isApprox(m.W * v));
}

TEST(Predict, Examples) {
  auto m = ZeroModel(2, 1, 2, Graph(2, {{0, 1}}));
  const std::vector<std::uint8_t> on{1};
  EXPECT_DOUBLE_EQ(PredictPotential(m, 0, 0, on), 0.5);
  const Vector ind = (Vector(2) << std::log(3.0), 0.0).finished();
  EXPECT_NEAR(PredictFromReps(ind, Vector::Zero(2)), 0.75, 1e-15);
  // Flipping the neighbor matters only when W maps its term to a nonzero sum.
  m.embeddings.users.row(1) << 1.0, 1.0;
  m.embeddings.items.row(0) << 1.0, 1.0;
  m.w << 0.0, 0.0, 1.0, 1.0;
  m.W << 1.0, -1.0, 1.0, -1.0;  // sums of W v are zero for v = (1, 1)
  const std::vector<std::uint8_t> off{0};
  EXPECT_DOUBLE_EQ(PredictPotential(m, 0, 0, on), PredictPotential(m, 0, 0, off));
  m.W = Matrix::Identity(2, 2);
  EXPECT_GT(PredictPotential(m, 0, 0, on), PredictPotential(m, 0, 0, off));
}

TEST(GradientCheck, RandomModelsPass) {
  const auto g = RandomGraph(30, 0.15, 3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = MakeNIRecModel(30, 20, 4, g, seed, 0.5, 0.2);
    std::mt19937_64 rng(seed);
    TrainSample s{.user = static_cast<UserId>(rng() % 30),
                  .item = static_cast<ItemId>(rng() % 20),
                  .y = static_cast<int>(rng() % 2)};
    for (std::size_t k = 0; k < g->Neighbors(s.user).size(); ++k)
      s.neighbor_treatments.push_back(rng() % 3 != 0);
    const auto r = GradientCheck(m, s, {.n_coords = 100, .seed = seed});
    EXPECT_GE(r.n_checked, std::min<std::size_t>(100, r.n_checked));
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(GradientCheck, FaultInjectionIsCaught) {
  const auto g = RandomGraph(20, 0.2, 4);
  const auto m = MakeNIRecModel(20, 10, 4, g, 2, 0.5, 0.2);
  UserId u = 0;
  while (g->Neighbors(u).empty()) ++u;
  TrainSample s{.user = u, .item = 3, .y = 1,
                .neighbor_treatments = std::vector<std::uint8_t>(g->Neighbors(u).size(), 1)};
  const auto bad = GradientCheck(m, s, {.n_coords = 400, .w_matrix_grad_scale = 2.0});
  EXPECT_GT(bad.max_rel_error, 0.1);
}

TEST(GradientCheck, ZeroModelHasNoError) {
  auto m = ZeroModel(3, 2, 2, Graph(3, {{0, 1}, {0, 2}}));
  TrainSample s{.user = 0, .item = 1, .y = 1, .neighbor_treatments = {1, 0}};
  const auto r = GradientCheck(m, s);
  EXPECT_LE(r.max_rel_error, 1e-9);
}

// Plain loop re-implementation of the loss used as an oracle for
// SampleLossAndGrad's value.
double ReferenceLoss(const NIRecModel& m, const TrainSample& s) {
  const auto nb = m.graph->Neighbors(s.user);
  const int d = m.dim();
  double z = 0;
  for (int k = 0; k < d; ++k) z += m.embeddings.users(s.user, k) * m.embeddings.items(s.item, k);
  std::vector<double> num(nb.size());
  double den = 0;
  for (std::size_t j = 0; j < nb.size(); ++j) {
    for (int k = 0; k < d; ++k)
      num[j] += m.w(k) * m.embeddings.users(s.user, k) +
                m.w(d + k) * m.embeddings.users(nb[j], k);
    den += num[j];
  }
  std::vector<double> agg(d, 0.0);
  for (std::size_t j = 0; j < nb.size(); ++j) {
    if (!s.neighbor_treatments[j]) continue;
    const double a = std::abs(den) < kAttentionEpsilon ? 1.0 / nb.size() : num[j] / den;
    for (int k = 0; k < d; ++k)
      agg[k] += a * m.embeddings.users(nb[j], k) * m.embeddings.items(s.item, k);
  }
  for (int r = 0; r < d; ++r)
    for (int k = 0; k < d; ++k) z += m.W(r, k) * agg[k];
  const double p = Sigmoid(z);
  return -(s.y ? std::log(p) : std::log(1 - p));
}

TEST(Loss, MatchesLoopImplementation) {
  const auto g = RandomGraph(25, 0.2, 8);
  const auto m = MakeNIRecModel(25, 10, 3, g, 4, 0.4, 0.1);
  std::mt19937_64 rng(1);
  for (int n = 0; n < 50; ++n) {
    TrainSample s{.user = static_cast<UserId>(rng() % 25),
                  .item = static_cast<ItemId>(rng() % 10),
                  .y = static_cast<int>(rng() % 2)};
    for (std::size_t k = 0; k < g->Neighbors(s.user).size(); ++k)
      s.neighbor_treatments.push_back(rng() % 2);
    EXPECT_NEAR(SampleLossAndGrad(m, s, 0.0, 1.0, nullptr), ReferenceLoss(m, s), 1e-10);
  }
}

TEST(Train, SinglePointOverfits) {
  const auto g = Graph(2, {{0, 1}});
  auto m = MakeNIRecModel(2, 1, 4, g, 1);
  const std::vector<TrainSample> one{{0, 0, 1, {1}}};
  EstimatorConfig c;
  c.train.epochs = 60;
  c.train.batch_size = 1;
  c.train.l2_reg = 0;
  c.dense_l2 = 0;
  const auto rep = TrainNIRec(m, one, c);
  ASSERT_GE(rep.loss_trajectory.size(), 20u);
  for (std::size_t e = 10; e + 1 < rep.loss_trajectory.size(); ++e)
    EXPECT_LE(rep.loss_trajectory[e + 1], rep.loss_trajectory[e]);
  EXPECT_GT(PredictPotential(m, 0, 0, one[0].neighbor_treatments), 0.95);
}

TEST(Train, DeterministicAndMonotoneAcceptedLoss) {
  const auto g = RandomGraph(40, 0.1, 2);
  const auto planted = MakeNIRecModel(40, 30, 3, g, 9, 0.6, 0.2);
  std::mt19937_64 rng(3);
  std::vector<TrainSample> samples;
  for (int n = 0; n < 600; ++n) {
    TrainSample s{.user = static_cast<UserId>(rng() % 40),
                  .item = static_cast<ItemId>(rng() % 30)};
    for (std::size_t k = 0; k < g->Neighbors(s.user).size(); ++k)
      s.neighbor_treatments.push_back(rng() % 2);
    s.y = Uniform01(rng) < PredictPotential(planted, s.user, s.item, s.neighbor_treatments);
    samples.push_back(std::move(s));
  }
  EstimatorConfig c;
  c.train.epochs = 15;
  c.train.dim = 3;
  c.train.batch_size = 64;
  for (bool adam : {true, false}) {
    c.use_adam = adam;
    auto a = MakeNIRecModel(40, 30, 3, g, 5, 0.1, 0.1);
    auto b = a;
    const auto ra = TrainNIRec(a, samples, c);
    const auto rb = TrainNIRec(b, samples, c);
    EXPECT_EQ(a.embeddings, b.embeddings);
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(ra.loss_trajectory, rb.loss_trajectory);
    for (std::size_t e = 1; e < ra.loss_trajectory.size(); ++e)
      EXPECT_LE(ra.loss_trajectory[e], ra.loss_trajectory[e - 1]);
    EXPECT_FALSE(ra.aborted);
  }
}

TEST(Train, NonFiniteLossRestoresCheckpoint) {
  const auto g = Graph(2, {{0, 1}});
  auto m = MakeNIRecModel(2, 1, 2, g, 1);
  const std::vector<TrainSample> one{{0, 0, 1, {1}}};
  EstimatorConfig c;
  c.use_adam = false;
  c.train.learning_rate = 1e300;
  c.train.epochs = 5;
  const auto rep = TrainNIRec(m, one, c);
  EXPECT_TRUE(rep.aborted || rep.halvings > 0);
  EXPECT_TRUE(m.embeddings.AllFinite());
  EXPECT_TRUE(m.W.allFinite());
  EXPECT_THROW(TrainNIRec(m, {}, c), InputError);
}

TEST(Samples, TreatmentsFollowExposure) {
  const auto g = Graph(3, {{0, 1}, {0, 2}});
  ExposureMatrix x(3, 2);
  x.Insert(0, 1);
  x.Insert(2, 1);
  const std::vector<SemiSyntheticRecord> recs{{0, 1, 1, 0.7}, {2, 1, 0, 0.2}};
  const auto s = BuildTrainSamples(recs, *g, x);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].neighbor_treatments, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_TRUE(s[1].neighbor_treatments.empty());
  EXPECT_EQ(s[0].y, 1);
}

TEST(Checkpoint, RoundTrip) {
  testing::TempDir dir;
  const auto g = RandomGraph(10, 0.3, 1);
  const auto m = MakeNIRecModel(10, 5, 3, g, 2);
  SaveNIRecModel(m, EstimatorConfig{}, EstimatorReport{}, dir / "m.json");
  const auto m2 = LoadNIRecModel(dir / "m.json", g);
  EXPECT_EQ(m2.embeddings, m.embeddings);
  EXPECT_EQ(m2.W, m.W);
  EXPECT_EQ(m2.w, m.w);
}

}  // namespace
}  // namespace nirec
