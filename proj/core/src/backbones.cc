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

#include "nirec/backbones.h"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "json_io.h"
#include "serialize.h"

namespace nirec {
namespace {

using Json = nlohmann::json;

void InitGaussian(Matrix& m, Rng& rng, double mean, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = mean + scale * normal(rng);
    }
  }
}

void ZeroLike(const EmbeddingTable& params, EmbeddingTable* grad) {
  grad->users.setZero(params.users.rows(), params.users.cols());
  grad->items.setZero(params.items.rows(), params.items.cols());
}

double AccumulateMFSample(const EmbeddingTable& p, const InteractionRecord& r,
                          double l2, EmbeddingTable* grad) {
  const auto eu = p.users.row(r.user);
  const auto ei = p.items.row(r.item);
  const double err = r.rating - eu.dot(ei);
  if (grad != nullptr) {
    grad->users.row(r.user) += -2.0 * err * ei + 2.0 * l2 * eu;
    grad->items.row(r.item) += -2.0 * err * eu + 2.0 * l2 * ei;
  }
  return err * err + l2 * (eu.squaredNorm() + ei.squaredNorm());
}

double AccumulateBprSample(const EmbeddingTable& p, const BprTriple& t,
                           double l2, EmbeddingTable* grad) {
  const auto eu = p.users.row(t.user);
  const auto ep = p.items.row(t.positive);
  const auto en = p.items.row(t.negative);
  const double x = eu.dot(ep) - eu.dot(en);
  if (grad != nullptr) {
    const double dx = -Sigmoid(-x);
    grad->users.row(t.user) += dx * (ep - en) + 2.0 * l2 * eu;
    grad->items.row(t.positive) += dx * eu + 2.0 * l2 * ep;
    grad->items.row(t.negative) += -dx * eu + 2.0 * l2 * en;
  }
  return -LogSigmoid(x) +
         l2 * (eu.squaredNorm() + ep.squaredNorm() + en.squaredNorm());
}

// Applies params -= lr * grad on the touched rows, then clears them.
// Applies accumulated sample gradients to the rows a batch touched. Each
// row's gradient is divided by the number of samples that touched it, so a
// popular item takes one averaged step per batch instead of a sum.
class SparseStep {
 public:
  SparseStep(const EmbeddingTable& params)
      : user_count_(static_cast<std::size_t>(params.num_users()), 0),
        item_count_(static_cast<std::size_t>(params.num_items()), 0) {
    ZeroLike(params, &grad_);
  }

  EmbeddingTable* grad() { return &grad_; }

  void Touch(UserId u, std::span<const ItemId> items) {
    if (user_count_[u]++ == 0) users_.push_back(u);
    for (ItemId i : items) {
      if (item_count_[i]++ == 0) items_.push_back(i);
    }
  }

  void Apply(EmbeddingTable& params, double lr) {
    for (UserId u : users_) {
      params.users.row(u) -= (lr / user_count_[u]) * grad_.users.row(u);
      grad_.users.row(u).setZero();
      user_count_[u] = 0;
    }
    for (ItemId i : items_) {
      params.items.row(i) -= (lr / item_count_[i]) * grad_.items.row(i);
      grad_.items.row(i).setZero();
      item_count_[i] = 0;
    }
    users_.clear();
    items_.clear();
  }

 private:
  EmbeddingTable grad_;
  std::vector<int> user_count_, item_count_;
  std::vector<UserId> users_;
  std::vector<ItemId> items_;
};

void CheckFinite(double loss, int epoch, std::string_view what) {
  if (!std::isfinite(loss)) {
    throw ConvergenceError(fmt::format(
        "{} diverged at epoch {} (loss {}); lower the learning rate", what,
        epoch, loss));
  }
}

}  // namespace

void TrainConfig::Validate() const {
  if (dim < 1 || epochs < 1 || batch_size < 1 || !(learning_rate > 0) ||
      l2_reg < 0 || !(init_scale >= 0)) {
    throw InputError(fmt::format(
        "invalid train config: dim={} epochs={} batch={} lr={} l2={}", dim,
        epochs, batch_size, learning_rate, l2_reg));
  }
}

double MFBatchLossAndGrad(const EmbeddingTable& params,
                          std::span<const InteractionRecord> batch, double l2,
                          EmbeddingTable* grad) {
  if (grad != nullptr) ZeroLike(params, grad);
  double loss = 0.0;
  for (const auto& r : batch) loss += AccumulateMFSample(params, r, l2, grad);
  return loss;
}

MFModel TrainMFRatings(std::span<const InteractionRecord> interactions,
                       UserId n_users, ItemId n_items,
                       const TrainConfig& config) {
  config.Validate();
  if (interactions.empty()) throw InputError("MF training needs ratings");
  MFModel model;
  model.config = config;
  Rng rng(config.seed);

  // Start near e_u . e_i = mean rating so the unbiased dot product does not
  // spend its first epochs climbing from zero.
  double mean = 0.0;
  for (const auto& r : interactions) mean += r.rating;
  mean /= static_cast<double>(interactions.size());
  const double centre = std::sqrt(std::max(mean, 0.0) / config.dim);
  auto& p = model.embeddings;
  p.users.resize(n_users, config.dim);
  p.items.resize(n_items, config.dim);
  InitGaussian(p.users, rng, centre, config.init_scale);
  InitGaussian(p.items, rng, centre, config.init_scale);

  std::vector<std::size_t> order(interactions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SparseStep step(p);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t b = start; b < end; ++b) {
        const auto& r = interactions[order[b]];
        AccumulateMFSample(p, r, config.l2_reg, step.grad());
        step.Touch(r.user, std::span<const ItemId>(&r.item, 1));
      }
      step.Apply(p, config.learning_rate);
    }
    const double loss = MFBatchLossAndGrad(p, interactions, config.l2_reg, nullptr) /
                        static_cast<double>(interactions.size());
    CheckFinite(loss, epoch, "MF");
    model.loss_trajectory.push_back(loss);
  }
  return model;
}

std::vector<double> RatingHistogram(std::span<const double> ratings) {
  std::vector<double> hist(kRatingHistogramBins, 0.0);
  if (ratings.empty()) return hist;
  const double width = 4.0 / (kRatingHistogramBins - 1);
  for (double r : ratings) {
    const long bin = std::lround((std::clamp(r, 1.0, 5.0) - 1.0) / width);
    hist[static_cast<std::size_t>(std::clamp(bin, 0L, long{kRatingHistogramBins - 1}))] += 1.0;
  }
  for (double& h : hist) h /= static_cast<double>(ratings.size());
  return hist;
}

double HistogramQuantile(std::span<const double> hist, double p) {
  if (hist.size() != static_cast<std::size_t>(kRatingHistogramBins)) {
    throw InputError(fmt::format("reference histogram needs {} bins, got {}",
                                 kRatingHistogramBins, hist.size()));
  }
  const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6 ||
      std::any_of(hist.begin(), hist.end(), [](double h) { return h < 0; })) {
    throw InputError("reference histogram must be nonnegative and sum to 1");
  }
  // Discrete distribution on bin centres; quantiles interpolate linearly
  // between the mass midpoints of consecutive non-empty bins.
  const double width = 4.0 / (kRatingHistogramBins - 1);
  double cum = 0.0;
  double prev_mid = -1.0, prev_x = 0.0;
  for (int b = 0; b < kRatingHistogramBins; ++b) {
    if (hist[b] <= 0) continue;
    const double mid = cum + hist[b] / 2.0;
    const double x = 1.0 + b * width;
    if (p <= mid) {
      if (prev_mid < 0) return x;
      return prev_x + (x - prev_x) * (p - prev_mid) / (mid - prev_mid);
    }
    prev_mid = mid;
    prev_x = x;
    cum += hist[b];
  }
  return prev_x;
}

AlignedRatings::AlignedRatings(const MFModel& model,
                               std::span<const InteractionRecord> observed,
                               std::span<const double> reference_hist,
                               std::uint64_t seed, std::size_t n_samples)
    : model_(&model) {
  for (const auto& r : observed) observed_[PackPair(r.user, r.item)] = r.rating;

  const auto n_users = static_cast<std::uint64_t>(model.embeddings.num_users());
  const auto n_items = static_cast<std::uint64_t>(model.embeddings.num_items());
  std::vector<double> preds;
  if (n_users * n_items <= n_samples) {
    for (UserId u = 0; u < static_cast<UserId>(n_users); ++u) {
      for (ItemId i = 0; i < static_cast<ItemId>(n_items); ++i) {
        preds.push_back(model.Predict(u, i));
      }
    }
  } else {
    Rng rng(seed);
    preds.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto u = static_cast<UserId>(UniformIndex(rng, n_users));
      const auto i = static_cast<ItemId>(UniformIndex(rng, n_items));
      preds.push_back(model.Predict(u, i));
    }
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty() || preds.front() == preds.back()) {
    degenerate_ = true;
    constant_ = HistogramQuantile(reference_hist, 0.5);
    return;
  }
  constexpr int kKnots = 200;
  for (int k = 0; k <= kKnots; ++k) {
    const double q = static_cast<double>(k) / kKnots;
    const double pos = q * static_cast<double>(preds.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, preds.size() - 1);
    const double x = preds[lo] + (preds[hi] - preds[lo]) * (pos - static_cast<double>(lo));
    const double y = HistogramQuantile(reference_hist, q);
    if (!knots_x_.empty() && x <= knots_x_.back()) continue;
    knots_x_.push_back(x);
    knots_y_.push_back(y);
  }
}

double AlignedRatings::Transform(double prediction) const {
  if (degenerate_) return std::clamp(constant_, 1.0, 5.0);
  if (prediction <= knots_x_.front()) return std::clamp(knots_y_.front(), 1.0, 5.0);
  if (prediction >= knots_x_.back()) return std::clamp(knots_y_.back(), 1.0, 5.0);
  const auto it = std::upper_bound(knots_x_.begin(), knots_x_.end(), prediction);
  const auto hi = static_cast<std::size_t>(it - knots_x_.begin());
  const std::size_t lo = hi - 1;
  const double t = (prediction - knots_x_[lo]) / (knots_x_[hi] - knots_x_[lo]);
  return std::clamp(knots_y_[lo] + t * (knots_y_[hi] - knots_y_[lo]), 1.0, 5.0);
}

double AlignedRatings::Rating(UserId u, ItemId i) const {
  if (auto it = observed_.find(PackPair(u, i)); it != observed_.end()) {
    return it->second;
  }
  return Transform(model_->Predict(u, i));
}

EmbeddingTable Propagate(const EmbeddingTable& base,
                         std::span<const UserItem> positives, int n_layers) {
  if (n_layers < 0) throw InputError("n_layers must be >= 0");
  EmbeddingTable acc = base;
  if (n_layers == 0 || positives.empty()) return acc;

  std::vector<UserItem> edges(positives.begin(), positives.end());
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<double> du(static_cast<std::size_t>(base.num_users()), 0.0);
  std::vector<double> di(static_cast<std::size_t>(base.num_items()), 0.0);
  for (const auto& [u, i] : edges) {
    du[u] += 1;
    di[i] += 1;
  }
  EmbeddingTable layer = base;
  for (int l = 0; l < n_layers; ++l) {
    EmbeddingTable next;
    next.users.setZero(layer.users.rows(), layer.users.cols());
    next.items.setZero(layer.items.rows(), layer.items.cols());
    for (const auto& [u, i] : edges) {
      const double w = 1.0 / std::sqrt(du[u] * di[i]);
      next.users.row(u) += w * layer.items.row(i);
      next.items.row(i) += w * layer.users.row(u);
    }
    layer = std::move(next);
    acc.users += layer.users;
    acc.items += layer.items;
  }
  acc.users /= static_cast<double>(n_layers + 1);
  acc.items /= static_cast<double>(n_layers + 1);
  return acc;
}

double BprBatchLossAndGrad(const EmbeddingTable& params,
                           std::span<const BprTriple> batch, double l2,
                           EmbeddingTable* grad) {
  if (grad != nullptr) ZeroLike(params, grad);
  double loss = 0.0;
  for (const auto& t : batch) loss += AccumulateBprSample(params, t, l2, grad);
  return loss;
}

LayeredGraphModel TrainBpr(std::span<const UserItem> positives, UserId n_users,
                           ItemId n_items, int n_layers,
                           const TrainConfig& config) {
  config.Validate();
  if (positives.empty()) throw InputError("BPR training needs positives");
  std::vector<UserItem> pos(positives.begin(), positives.end());
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());

  std::vector<std::unordered_set<ItemId>> liked(static_cast<std::size_t>(n_users));
  for (const auto& [u, i] : pos) {
    if (u < 0 || u >= n_users || i < 0 || i >= n_items) {
      throw InputError(fmt::format("positive ({}, {}) out of range", u, i));
    }
    liked[u].insert(i);
  }
  for (UserId u = 0; u < n_users; ++u) {
    if (liked[u].size() == static_cast<std::size_t>(n_items)) {
      throw InputError(fmt::format("user {} has no candidate negatives", u));
    }
  }

  LayeredGraphModel model;
  model.n_layers = n_layers;
  model.config = config;
  Rng rng(config.seed);
  auto& p = model.base;
  p.users.resize(n_users, config.dim);
  p.items.resize(n_items, config.dim);
  InitGaussian(p.users, rng, 0.0, config.init_scale);
  InitGaussian(p.items, rng, 0.0, config.init_scale);

  std::vector<std::size_t> order(pos.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<BprTriple> triples(pos.size());
  SparseStep step(p);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); ++b) {
      const auto& [u, i] = pos[order[b]];
      ItemId neg;
      do {
        neg = static_cast<ItemId>(UniformIndex(rng, static_cast<std::uint64_t>(n_items)));
      } while (liked[u].contains(neg));
      triples[b] = {u, i, neg};
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < triples.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(triples.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t b = start; b < end; ++b) {
        const auto& t = triples[b];
        epoch_loss += AccumulateBprSample(p, t, config.l2_reg, step.grad());
        const ItemId items[2] = {t.positive, t.negative};
        step.Touch(t.user, items);
      }
      step.Apply(p, config.learning_rate);
    }
    epoch_loss /= static_cast<double>(triples.size());
    CheckFinite(epoch_loss, epoch, "BPR");
    model.loss_trajectory.push_back(epoch_loss);
  }
  if (!p.AllFinite()) throw ConvergenceError("BPR produced non-finite embeddings");
  model.final = Propagate(p, pos, n_layers);
  return model;
}

std::vector<double> UserScores(const EmbeddingTable& table, UserId u) {
  const Vector s = table.items * table.users.row(u).transpose();
  return {s.data(), s.data() + s.size()};
}

std::vector<ItemId> TopK(std::span<const double> scores, int k,
                         std::span<const ItemId> exclude) {
  if (k < 1) throw InputError("top-k needs k >= 1");
  std::vector<char> skip(scores.size(), 0);
  for (ItemId i : exclude) {
    if (i >= 0 && static_cast<std::size_t>(i) < scores.size()) skip[i] = 1;
  }
  std::vector<ItemId> cand;
  cand.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!skip[i]) cand.push_back(static_cast<ItemId>(i));
  }
  if (cand.size() < static_cast<std::size_t>(k)) {
    throw InputError(fmt::format("top-{} requested but only {} candidates", k,
                                 cand.size()));
  }
  const auto better = [&](ItemId a, ItemId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
  cand.resize(static_cast<std::size_t>(k));
  return cand;
}

void SaveMFModel(const MFModel& model, const std::filesystem::path& path) {
  Json j;
  j["config"] = TrainConfigToJson(model.config);
  j["global_bias"] = model.global_bias;
  j["embeddings"] = EmbeddingsToJson(model.embeddings);
  j["loss_trajectory"] = model.loss_trajectory;
  WriteArtifact(path, "mf-model", j);
}

MFModel LoadMFModel(const std::filesystem::path& path) {
  const Json j = ReadArtifact(path, "mf-model");
  MFModel m;
  try {
    m.config = TrainConfigFromJson(j.at("config"));
    m.global_bias = j.at("global_bias").get<double>();
    m.embeddings = EmbeddingsFromJson(j.at("embeddings"));
    m.loss_trajectory = j.at("loss_trajectory").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

void SaveLayeredModel(const LayeredGraphModel& model,
                      const std::filesystem::path& path) {
  Json j;
  j["config"] = TrainConfigToJson(model.config);
  j["n_layers"] = model.n_layers;
  j["base"] = EmbeddingsToJson(model.base);
  j["final"] = EmbeddingsToJson(model.final);
  j["loss_trajectory"] = model.loss_trajectory;
  WriteArtifact(path, "layered-model", j);
}

LayeredGraphModel LoadLayeredModel(const std::filesystem::path& path) {
  const Json j = ReadArtifact(path, "layered-model");
  LayeredGraphModel m;
  try {
    m.config = TrainConfigFromJson(j.at("config"));
    m.n_layers = j.at("n_layers").get<int>();
    m.base = EmbeddingsFromJson(j.at("base"));
    m.final = EmbeddingsFromJson(j.at("final"));
    m.loss_trajectory = j.at("loss_trajectory").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

// ---- serialize.h ----

Json MatrixToJson(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix MatrixFromJson(const Json& j, std::string_view what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw InputError(fmt::format("matrix {} has inconsistent shape", what));
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Json VectorToJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector VectorFromJson(const Json& j, std::string_view /*what*/) {
  const auto data = j.get<std::vector<double>>();
  Vector v(static_cast<Eigen::Index>(data.size()));
  std::copy(data.begin(), data.end(), v.data());
  return v;
}

Json EmbeddingsToJson(const EmbeddingTable& t) {
  return {{"dim", t.dim()},
          {"users", MatrixToJson(t.users)},
          {"items", MatrixToJson(t.items)}};
}

EmbeddingTable EmbeddingsFromJson(const Json& j) {
  EmbeddingTable t;
  t.users = MatrixFromJson(j.at("users"), "users");
  t.items = MatrixFromJson(j.at("items"), "items");
  if (t.users.cols() != t.items.cols() || t.dim() != j.at("dim").get<int>()) {
    throw InputError("embedding table dims disagree");
  }
  return t;
}

Json TrainConfigToJson(const TrainConfig& c) {
  return {{"dim", c.dim},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"l2_reg", c.l2_reg},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"init_scale", c.init_scale}};
}

TrainConfig TrainConfigFromJson(const Json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  c.dim = j.value("dim", c.dim);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.l2_reg = j.value("l2_reg", c.l2_reg);
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

}  // namespace nirec
