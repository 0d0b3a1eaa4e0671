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

#ifndef NIREC_BACKBONES_H_
#define NIREC_BACKBONES_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nirec/common.h"
#include "nirec/corpus.h"

namespace nirec {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct EmbeddingTable {
  Matrix users;  // n_users x dim
  Matrix items;  // n_items x dim

  int dim() const { return static_cast<int>(users.cols()); }
  UserId num_users() const { return static_cast<UserId>(users.rows()); }
  ItemId num_items() const { return static_cast<ItemId>(items.rows()); }
  double Score(UserId u, ItemId i) const {
    return users.row(u).dot(items.row(i));
  }
  bool AllFinite() const {
    return users.allFinite() && items.allFinite();
  }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.users.rows() == b.users.rows() && a.users.cols() == b.users.cols() &&
           a.items.rows() == b.items.rows() && a.items.cols() == b.items.cols() &&
           a.users == b.users && a.items == b.items;
  }
};

struct TrainConfig {
  int dim = 16;
  int epochs = 200;
  double learning_rate = 0.05;
  double l2_reg = 1e-4;
  std::uint64_t seed = 1;
  int batch_size = 512;
  double init_scale = 0.1;  // std-dev of the Gaussian initialization

  void Validate() const;
};

// Squared-error matrix factorization, predict(u, i) = e_u . e_i + bias.
struct MFModel {
  EmbeddingTable embeddings;
  double global_bias = 0.0;
  std::vector<double> loss_trajectory;  // mean per-sample loss after each epoch
  TrainConfig config;

  double Predict(UserId u, ItemId i) const {
    return embeddings.Score(u, i) + global_bias;
  }
  double final_loss() const {
    return loss_trajectory.empty() ? 0.0 : loss_trajectory.back();
  }
};

// Seeded mini-batch gradient descent on sum_b [(r - e_u.e_i)^2 +
// l2 (|e_u|^2 + |e_i|^2)]. Throws ConvergenceError if the loss goes
// non-finite.
MFModel TrainMFRatings(std::span<const InteractionRecord> interactions,
                       UserId n_users, ItemId n_items,
                       const TrainConfig& config);

// Batch objective above and its dense gradient (grad is resized and zeroed).
double MFBatchLossAndGrad(const EmbeddingTable& params,
                          std::span<const InteractionRecord> batch, double l2,
                          EmbeddingTable* grad);

inline constexpr int kRatingHistogramBins = 50;

// Histogram over [1, 5] with 50 bins whose centres run from 1 to 5
// inclusive; normalized to sum to one.
std::vector<double> RatingHistogram(std::span<const double> ratings);

// A completed rating matrix: observed cells keep their rating, the rest are
// MF predictions pushed through a monotone piecewise-linear quantile map so
// that their marginal follows a reference histogram.
class AlignedRatings {
 public:
  AlignedRatings(const MFModel& model,
                 std::span<const InteractionRecord> observed,
                 std::span<const double> reference_hist, std::uint64_t seed,
                 std::size_t n_samples = 20000);

  double Rating(UserId u, ItemId i) const;
  double Transform(double prediction) const;
  bool degenerate() const { return degenerate_; }
  const MFModel& model() const { return *model_; }

 private:
  const MFModel* model_;
  std::unordered_map<std::uint64_t, double> observed_;
  std::vector<double> knots_x_;
  std::vector<double> knots_y_;
  double constant_ = 3.0;
  bool degenerate_ = false;
};

// Inverse CDF of a rating histogram (as produced by RatingHistogram).
double HistogramQuantile(std::span<const double> hist, double p);

// Pairwise-ranking model with LightGCN-style layer averaging.
struct LayeredGraphModel {
  EmbeddingTable base;
  int n_layers = 0;
  EmbeddingTable final;
  std::vector<double> loss_trajectory;
  TrainConfig config;

  double Score(UserId u, ItemId i) const { return final.Score(u, i); }
};

using UserItem = std::pair<UserId, ItemId>;

// Mean of layer 0..L embeddings, layer l+1 = A_hat * layer l, where A_hat is
// the symmetric-normalized user-item bipartite adjacency built from
// `positives`.
EmbeddingTable Propagate(const EmbeddingTable& base,
                         std::span<const UserItem> positives, int n_layers);

struct BprTriple {
  UserId user;
  ItemId positive;
  ItemId negative;
};

// Sum over triples of -log sigmoid(s(u,p) - s(u,n)) + l2 (|e_u|^2 + |e_p|^2 +
// |e_n|^2) on base embeddings.
double BprBatchLossAndGrad(const EmbeddingTable& params,
                           std::span<const BprTriple> batch, double l2,
                           EmbeddingTable* grad);

// Trains base embeddings with BPR (one seeded uniform negative per positive
// per epoch), then propagates. Throws InputError if a user has no negatives.
LayeredGraphModel TrainBpr(std::span<const UserItem> positives, UserId n_users,
                           ItemId n_items, int n_layers,
                           const TrainConfig& config);

// Highest-scoring k items outside `exclude`, ordered by (score desc, id asc).
// Throws InputError when fewer than k candidates remain.
std::vector<ItemId> TopK(std::span<const double> scores, int k,
                         std::span<const ItemId> exclude = {});
std::vector<double> UserScores(const EmbeddingTable& table, UserId u);

void SaveMFModel(const MFModel& model, const std::filesystem::path& path);
MFModel LoadMFModel(const std::filesystem::path& path);
void SaveLayeredModel(const LayeredGraphModel& model,
                      const std::filesystem::path& path);
LayeredGraphModel LoadLayeredModel(const std::filesystem::path& path);

}  // namespace nirec

#endif  // NIREC_BACKBONES_H_
