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

#ifndef NIREC_ESTIMATOR_H_
#define NIREC_ESTIMATOR_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nirec/backbones.h"
#include "nirec/corpus.h"
#include "nirec/gradcheck.h"
#include "nirec/simworld.h"

namespace nirec {

// Interference-aware potential-outcome estimator.
//
//   e_ui = e_u * e_i                                  (individual)
//   a_uv = w.[e_u || e_v] / sum_{v' in N_u} w.[e_u || e_v']
//   g_ui = W sum_{v in N_u} o_vi a_uv (e_v * e_i)     (interference)
//   p    = sigmoid(1.[e_ui || g_ui])
//
// Attention is normalized linearly over all of N_u; the treatment mask only
// enters the sum for g_ui. When |denominator| < kAttentionEpsilon the weights
// fall back to uniform and the call is flagged as degenerate.
struct NIRecModel {
  EmbeddingTable embeddings;
  Matrix W;  // dim x dim
  Vector w;  // 2 * dim; first half scores e_u, second half e_v
  std::shared_ptr<const SocialGraph> graph;

  int dim() const { return embeddings.dim(); }
  NIRecModel WithGraph(std::shared_ptr<const SocialGraph> g) const {
    NIRecModel m = *this;
    m.graph = std::move(g);
    return m;
  }
};

inline constexpr double kAttentionEpsilon = 1e-8;

// Random model; embeddings and attention weights ~ N(mean, scale), W ~
// N(0, scale).
NIRecModel MakeNIRecModel(UserId n_users, ItemId n_items, int dim,
                          std::shared_ptr<const SocialGraph> graph,
                          std::uint64_t seed, double scale = 0.1,
                          double mean = 0.0);

Vector IndividualRep(const NIRecModel& model, UserId u, ItemId i);

struct Attention {
  std::vector<double> weights;  // aligned with N_u
  double denominator = 0.0;
  bool degenerate = false;
};
Attention AttentionWeights(const NIRecModel& model, UserId u);
// Throws InputError when `neighbor` is not in N_u.
double AttentionWeight(const NIRecModel& model, UserId u, UserId neighbor,
                       bool* degenerate = nullptr);

Vector InterferenceRep(const NIRecModel& model, UserId u, ItemId i,
                       std::span<const std::uint8_t> treatments);

// sigmoid(sum(e_ui) + sum(g_ui)).
double PredictFromReps(const Vector& individual, const Vector& interference);
double PredictPotential(const NIRecModel& model, UserId u, ItemId i,
                        std::span<const std::uint8_t> treatments);

struct TrainSample {
  UserId user = 0;
  ItemId item = 0;
  int y = 0;
  std::vector<std::uint8_t> neighbor_treatments;  // aligned with N_user
};

// One sample per exposed record; treatments read from the exposure matrix.
std::vector<TrainSample> BuildTrainSamples(
    std::span<const SemiSyntheticRecord> records, const SocialGraph& graph,
    const ExposureMatrix& exposure);

// Dense gradient of the same shape as the model.
struct NIRecGradient {
  EmbeddingTable embeddings;
  Matrix W;
  Vector w;
};

// Cross-entropy of one sample plus l2 (|e_u|^2 + |e_i|^2), optionally
// accumulating `scale` times its gradient.
double SampleLossAndGrad(const NIRecModel& model, const TrainSample& sample,
                         double l2, double scale, NIRecGradient* grad);

double MeanCrossEntropy(const NIRecModel& model,
                        std::span<const TrainSample> samples);

struct EstimatorConfig {
  TrainConfig train{.dim = 16,
                    .epochs = 60,
                    .learning_rate = 0.01,
                    .l2_reg = 1e-5,
                    .seed = 1,
                    .batch_size = 256,
                    .init_scale = 0.1};
  double init_mean = 0.1;
  // Penalty on W and w, added once to the mean objective. Kept separate from
  // the per-sample embedding penalty because W must be free to carry large
  // interference gains.
  double dense_l2 = 1e-6;
  bool use_adam = true;  // false: plain mini-batch gradient descent
  int max_halvings = 3;
};

struct EstimatorReport {
  std::vector<double> loss_trajectory;  // accepted epochs only, non-increasing
  std::vector<double> lr_trajectory;
  int halvings = 0;
  int rejected_epochs = 0;
  std::size_t degenerate_attention = 0;  // samples hitting the fallback, last epoch
  bool aborted = false;
  std::string message;
};

// Minimizes mean cross-entropy (+ l2) with seeded mini-batches. After every
// epoch the full objective is evaluated; an increase rolls the parameters
// back and halves the learning rate, and training stops after max_halvings
// consecutive halvings. A non-finite loss restores the last finite
// parameters and sets `aborted`.
EstimatorReport TrainNIRec(NIRecModel& model,
                           std::span<const TrainSample> samples,
                           const EstimatorConfig& config);

struct EstimatorGradCheckOptions {
  std::size_t n_coords = 100;
  double h = 1e-4;
  std::uint64_t seed = 7;
  double w_matrix_grad_scale = 1.0;  // != 1 only for fault injection
};

// Per-sample cross-entropy gradient against central differences over
// coordinates drawn from e_u, e_i, the neighbors' e_v, W and w.
GradCheckResult GradientCheck(const NIRecModel& model, const TrainSample& sample,
                              const EstimatorGradCheckOptions& options = {});

void SaveNIRecModel(const NIRecModel& model, const EstimatorConfig& config,
                    const EstimatorReport& report,
                    const std::filesystem::path& path);
NIRecModel LoadNIRecModel(const std::filesystem::path& path,
                          std::shared_ptr<const SocialGraph> graph);

}  // namespace nirec

#endif  // NIREC_ESTIMATOR_H_
