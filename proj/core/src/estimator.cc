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

#include "nirec/estimator.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "json_io.h"
#include "serialize.h"

namespace nirec {
namespace {

using Json = nlohmann::json;

// Forward quantities reused by the backward pass.
struct Forward {
  std::span<const UserId> nbrs;
  std::vector<double> scores;  // w.[e_u || e_v]
  std::vector<double> attn;
  double denominator = 0.0;
  bool degenerate = false;
  Vector h;  // sum o a (e_v * e_i)
  double z = 0.0;
};

Forward RunForward(const NIRecModel& m, UserId u, ItemId i,
                   std::span<const std::uint8_t> treatments) {
  Forward f;
  const int d = m.dim();
  const auto eu = m.embeddings.users.row(u);
  const auto ei = m.embeddings.items.row(i);
  f.nbrs = m.graph->Neighbors(u);
  if (treatments.size() != f.nbrs.size()) {
    throw InputError(fmt::format("user {} has {} neighbors but {} treatments", u,
                                 f.nbrs.size(), treatments.size()));
  }
  f.h = Vector::Zero(d);
  f.z = eu.dot(ei);
  const std::size_t n = f.nbrs.size();
  if (n == 0) return f;

  const double user_part = m.w.head(d).dot(eu.transpose());
  f.scores.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    f.scores[j] =
        user_part + m.w.tail(d).dot(m.embeddings.users.row(f.nbrs[j]).transpose());
    f.denominator += f.scores[j];
  }
  f.degenerate = std::abs(f.denominator) < kAttentionEpsilon;
  f.attn.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    f.attn[j] = f.degenerate ? 1.0 / static_cast<double>(n)
                             : f.scores[j] / f.denominator;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!treatments[j]) continue;
    f.h += f.attn[j] *
           m.embeddings.users.row(f.nbrs[j]).cwiseProduct(ei).transpose();
  }
  f.z += (m.W * f.h).sum();
  return f;
}

// Rows written since the last Clear(); lets training zero only what it used.
struct Touched {
  std::vector<char> user_flag, item_flag;
  std::vector<UserId> users;
  std::vector<ItemId> items;

  void Reset(UserId n_users, ItemId n_items) {
    user_flag.assign(static_cast<std::size_t>(n_users), 0);
    item_flag.assign(static_cast<std::size_t>(n_items), 0);
    users.clear();
    items.clear();
  }
  void User(UserId u) {
    if (!user_flag[u]) {
      user_flag[u] = 1;
      users.push_back(u);
    }
  }
  void Item(ItemId i) {
    if (!item_flag[i]) {
      item_flag[i] = 1;
      items.push_back(i);
    }
  }
  void Clear() {
    for (UserId u : users) user_flag[u] = 0;
    for (ItemId i : items) item_flag[i] = 0;
    users.clear();
    items.clear();
  }
};

void Backward(const NIRecModel& m, ItemId i, UserId u,
              std::span<const std::uint8_t> treatments, const Forward& f,
              double gz, double w_matrix_scale, NIRecGradient& g,
              Touched* touched) {
  const int d = m.dim();
  const auto eu = m.embeddings.users.row(u);
  const auto ei = m.embeddings.items.row(i);
  const Vector c = m.W.colwise().sum().transpose();  // d z / d h

  g.embeddings.users.row(u) += gz * ei;
  g.embeddings.items.row(i) += gz * eu;
  if (touched != nullptr) {
    touched->User(u);
    touched->Item(i);
  }
  // dz/dW(r, k) = h_k for every row r.
  g.W.rowwise() += (w_matrix_scale * gz) * f.h.transpose();

  const std::size_t n = f.nbrs.size();
  if (n == 0) return;
  const Vector c_ei = c.cwiseProduct(ei.transpose());
  std::vector<double> q(n, 0.0);
  double qbar = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!treatments[j]) continue;
    const UserId v = f.nbrs[j];
    const auto ev = m.embeddings.users.row(v);
    g.embeddings.items.row(i) += (gz * f.attn[j]) * ev.cwiseProduct(c.transpose());
    g.embeddings.users.row(v) += (gz * f.attn[j]) * c_ei.transpose();
    if (touched != nullptr) touched->User(v);
    q[j] = c_ei.dot(ev.transpose());
    qbar += f.attn[j] * q[j];
  }
  if (f.degenerate) return;  // constant weights: no attention gradient
  double ds_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double ds = gz * (q[j] - qbar) / f.denominator;
    if (ds == 0.0) continue;
    const UserId v = f.nbrs[j];
    ds_sum += ds;
    g.w.tail(d) += ds * m.embeddings.users.row(v).transpose();
    g.embeddings.users.row(v) += ds * m.w.tail(d).transpose();
    if (touched != nullptr) touched->User(v);
  }
  g.w.head(d) += ds_sum * eu.transpose();
  g.embeddings.users.row(u) += ds_sum * m.w.head(d).transpose();
}

double CrossEntropyFromLogit(double z, int y) {
  // -[y log s(z) + (1-y) log(1 - s(z))]
  return y ? -LogSigmoid(z) : -LogSigmoid(-z);
}

NIRecGradient ZeroGradient(const NIRecModel& m) {
  NIRecGradient g;
  g.embeddings.users.setZero(m.embeddings.users.rows(), m.dim());
  g.embeddings.items.setZero(m.embeddings.items.rows(), m.dim());
  g.W.setZero(m.dim(), m.dim());
  g.w.setZero(2 * m.dim());
  return g;
}

double Objective(const NIRecModel& m, std::span<const TrainSample> samples,
                 double l2, double dense_l2, std::size_t* degenerate) {
  double total = 0.0;
  std::size_t deg = 0;
  for (const auto& s : samples) {
    const Forward f = RunForward(m, s.user, s.item, s.neighbor_treatments);
    deg += f.degenerate ? 1 : 0;
    total += CrossEntropyFromLogit(f.z, s.y);
    if (l2 > 0) {
      total += l2 * (m.embeddings.users.row(s.user).squaredNorm() +
                     m.embeddings.items.row(s.item).squaredNorm());
    }
  }
  if (degenerate != nullptr) *degenerate = deg;
  return total / static_cast<double>(samples.size()) +
         dense_l2 * (m.W.squaredNorm() + m.w.squaredNorm());
}

struct AdamState {
  NIRecGradient m1, m2;
  std::int64_t step = 0;
};

void AdamUpdateRow(Eigen::Ref<Eigen::RowVectorXd> param,
                   Eigen::Ref<Eigen::RowVectorXd> grad,
                   Eigen::Ref<Eigen::RowVectorXd> m1,
                   Eigen::Ref<Eigen::RowVectorXd> m2, double lr, double c1,
                   double c2) {
  constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  m1 = kB1 * m1 + (1 - kB1) * grad;
  m2 = kB2 * m2 + (1 - kB2) * grad.cwiseAbs2();
  param.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kEps);
}

}  // namespace

NIRecModel MakeNIRecModel(UserId n_users, ItemId n_items, int dim,
                          std::shared_ptr<const SocialGraph> graph,
                          std::uint64_t seed, double scale, double mean) {
  if (dim < 1) throw InputError("estimator dim must be >= 1");
  if (graph == nullptr || graph->num_users() != n_users) {
    throw InputError("estimator graph does not match the user count");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NIRecModel m;
  m.graph = std::move(graph);
  auto fill = [&](auto& mat, double mu) {
    for (Eigen::Index k = 0; k < mat.size(); ++k) {
      mat.data()[k] = mu + scale * normal(rng);
    }
  };
  m.embeddings.users.resize(n_users, dim);
  m.embeddings.items.resize(n_items, dim);
  m.W.resize(dim, dim);
  m.w.resize(2 * dim);
  fill(m.embeddings.users, mean);
  fill(m.embeddings.items, mean);
  fill(m.W, 0.0);
  fill(m.w, mean);
  return m;
}

Vector IndividualRep(const NIRecModel& model, UserId u, ItemId i) {
  return model.embeddings.users.row(u)
      .cwiseProduct(model.embeddings.items.row(i))
      .transpose();
}

Attention AttentionWeights(const NIRecModel& model, UserId u) {
  const auto nbrs = model.graph->Neighbors(u);
  std::vector<std::uint8_t> none(nbrs.size(), 0);
  const Forward f = RunForward(model, u, 0, none);
  return {f.attn, f.denominator, f.degenerate};
}

double AttentionWeight(const NIRecModel& model, UserId u, UserId neighbor,
                       bool* degenerate) {
  const auto nbrs = model.graph->Neighbors(u);
  const auto it = std::lower_bound(nbrs.begin(), nbrs.end(), neighbor);
  if (it == nbrs.end() || *it != neighbor) {
    throw InputError(fmt::format("user {} is not a neighbor of {}", neighbor, u));
  }
  const Attention a = AttentionWeights(model, u);
  if (degenerate != nullptr) *degenerate = a.degenerate;
  return a.weights[static_cast<std::size_t>(it - nbrs.begin())];
}

Vector InterferenceRep(const NIRecModel& model, UserId u, ItemId i,
                       std::span<const std::uint8_t> treatments) {
  const Forward f = RunForward(model, u, i, treatments);
  return model.W * f.h;
}

double PredictFromReps(const Vector& individual, const Vector& interference) {
  return Sigmoid(individual.sum() + interference.sum());
}

double PredictPotential(const NIRecModel& model, UserId u, ItemId i,
                        std::span<const std::uint8_t> treatments) {
  return Sigmoid(RunForward(model, u, i, treatments).z);
}

std::vector<TrainSample> BuildTrainSamples(
    std::span<const SemiSyntheticRecord> records, const SocialGraph& graph,
    const ExposureMatrix& exposure) {
  std::vector<TrainSample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!exposure.Contains(r.user, r.item)) {
      throw InputError(fmt::format("record ({}, {}) is not exposed", r.user, r.item));
    }
    out.push_back({r.user, r.item, r.y,
                   NeighborTreatments(graph, exposure, r.user, r.item)});
  }
  return out;
}

double SampleLossAndGrad(const NIRecModel& model, const TrainSample& sample,
                         double l2, double scale, NIRecGradient* grad) {
  const Forward f =
      RunForward(model, sample.user, sample.item, sample.neighbor_treatments);
  const auto eu = model.embeddings.users.row(sample.user);
  const auto ei = model.embeddings.items.row(sample.item);
  double loss = CrossEntropyFromLogit(f.z, sample.y) +
                l2 * (eu.squaredNorm() + ei.squaredNorm());
  if (grad != nullptr) {
    const double gz = scale * (Sigmoid(f.z) - sample.y);
    Backward(model, sample.item, sample.user, sample.neighbor_treatments, f, gz,
             1.0, *grad, nullptr);
    if (l2 > 0) {
      grad->embeddings.users.row(sample.user) += (scale * 2 * l2) * eu;
      grad->embeddings.items.row(sample.item) += (scale * 2 * l2) * ei;
    }
  }
  return loss;
}

double MeanCrossEntropy(const NIRecModel& model,
                        std::span<const TrainSample> samples) {
  if (samples.empty()) return 0.0;
  return Objective(model, samples, 0.0, 0.0, nullptr);
}

EstimatorReport TrainNIRec(NIRecModel& model,
                           std::span<const TrainSample> samples,
                           const EstimatorConfig& config) {
  const TrainConfig& tc = config.train;
  tc.Validate();
  if (samples.empty()) throw InputError("estimator training needs samples");
  const double l2 = tc.l2_reg;
  EstimatorReport report;
  Rng rng(tc.seed);
  double lr = tc.learning_rate;

  NIRecGradient grad = ZeroGradient(model);
  AdamState adam{ZeroGradient(model), ZeroGradient(model), 0};
  Touched touched;
  touched.Reset(model.embeddings.num_users(), model.embeddings.num_items());

  std::size_t degenerate = 0;
  double best = Objective(model, samples, l2, config.dense_l2, &degenerate);
  if (!std::isfinite(best)) {
    report.aborted = true;
    report.message = "initial loss is not finite";
    return report;
  }
  report.loss_trajectory.push_back(best);
  report.lr_trajectory.push_back(lr);
  NIRecModel snapshot = model;
  AdamState adam_snapshot = adam;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  int consecutive_halvings = 0;
  const auto batch = static_cast<std::size_t>(tc.batch_size);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = samples[order[b]];
        const Forward f = RunForward(model, s.user, s.item, s.neighbor_treatments);
        const double gz = scale * (Sigmoid(f.z) - s.y);
        Backward(model, s.item, s.user, s.neighbor_treatments, f, gz, 1.0, grad,
                 &touched);
        if (l2 > 0) {
          grad.embeddings.users.row(s.user) +=
              (scale * 2 * l2) * model.embeddings.users.row(s.user);
          grad.embeddings.items.row(s.item) +=
              (scale * 2 * l2) * model.embeddings.items.row(s.item);
        }
      }
      grad.W += (2 * config.dense_l2) * model.W;
      grad.w += (2 * config.dense_l2) * model.w;

      auto& p = model.embeddings;
      auto& gp = grad.embeddings;
      if (config.use_adam) {
        ++adam.step;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam.step));
        for (UserId u : touched.users) {
          AdamUpdateRow(p.users.row(u), gp.users.row(u),
                        adam.m1.embeddings.users.row(u),
                        adam.m2.embeddings.users.row(u), lr, c1, c2);
        }
        for (ItemId i : touched.items) {
          AdamUpdateRow(p.items.row(i), gp.items.row(i),
                        adam.m1.embeddings.items.row(i),
                        adam.m2.embeddings.items.row(i), lr, c1, c2);
        }
        for (Eigen::Index r = 0; r < model.W.rows(); ++r) {
          AdamUpdateRow(model.W.row(r), grad.W.row(r), adam.m1.W.row(r),
                        adam.m2.W.row(r), lr, c1, c2);
        }
        Eigen::RowVectorXd wrow = model.w.transpose();
        Eigen::RowVectorXd grow = grad.w.transpose();
        Eigen::RowVectorXd m1 = adam.m1.w.transpose();
        Eigen::RowVectorXd m2 = adam.m2.w.transpose();
        AdamUpdateRow(wrow, grow, m1, m2, lr, c1, c2);
        model.w = wrow.transpose();
        adam.m1.w = m1.transpose();
        adam.m2.w = m2.transpose();
      } else {
        for (UserId u : touched.users) p.users.row(u) -= lr * gp.users.row(u);
        for (ItemId i : touched.items) p.items.row(i) -= lr * gp.items.row(i);
        model.W -= lr * grad.W;
        model.w -= lr * grad.w;
      }
      for (UserId u : touched.users) gp.users.row(u).setZero();
      for (ItemId i : touched.items) gp.items.row(i).setZero();
      grad.W.setZero();
      grad.w.setZero();
      touched.Clear();
    }

    const double loss = Objective(model, samples, l2, config.dense_l2, &degenerate);
    if (!std::isfinite(loss)) {
      model = snapshot;
      report.aborted = true;
      report.message = fmt::format(
          "non-finite loss at epoch {}; restored the last finite parameters",
          epoch);
      break;
    }
    if (loss > best) {
      model = snapshot;
      adam = adam_snapshot;
      lr *= 0.5;
      ++report.halvings;
      ++report.rejected_epochs;
      if (++consecutive_halvings >= config.max_halvings) break;
      continue;
    }
    consecutive_halvings = 0;
    best = loss;
    snapshot = model;
    adam_snapshot = adam;
    report.loss_trajectory.push_back(loss);
    report.lr_trajectory.push_back(lr);
    report.degenerate_attention = degenerate;
  }
  return report;
}

GradCheckResult GradientCheck(const NIRecModel& model, const TrainSample& sample,
                              const EstimatorGradCheckOptions& options) {
  NIRecModel m = model;
  NIRecGradient g = ZeroGradient(m);
  const Forward f =
      RunForward(m, sample.user, sample.item, sample.neighbor_treatments);
  Backward(m, sample.item, sample.user, sample.neighbor_treatments, f,
           Sigmoid(f.z) - sample.y, options.w_matrix_grad_scale, g, nullptr);

  std::vector<UserId> users{sample.user};
  for (UserId v : m.graph->Neighbors(sample.user)) users.push_back(v);
  const ItemId item = sample.item;
  std::vector<GradCoordinate> pool;
  AppendEmbeddingCoordinates(m.embeddings, g.embeddings, users,
                             std::span<const ItemId>(&item, 1), pool);
  for (Eigen::Index r = 0; r < m.W.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.W.cols(); ++c) {
      pool.push_back({&m.W(r, c), g.W(r, c), fmt::format("W[{}][{}]", r, c)});
    }
  }
  for (Eigen::Index k = 0; k < m.w.size(); ++k) {
    pool.push_back({&m.w(k), g.w(k), fmt::format("w[{}]", k)});
  }
  auto coords = SampleCoordinates(std::move(pool), options.n_coords, options.seed);
  return CheckGradients(
      [&] {
        return CrossEntropyFromLogit(
            RunForward(m, sample.user, sample.item, sample.neighbor_treatments).z,
            sample.y);
      },
      coords, options.h);
}

void SaveNIRecModel(const NIRecModel& model, const EstimatorConfig& config,
                    const EstimatorReport& report,
                    const std::filesystem::path& path) {
  Json j;
  j["config"] = TrainConfigToJson(config.train);
  j["config"]["init_mean"] = config.init_mean;
  j["config"]["dense_l2"] = config.dense_l2;
  j["config"]["use_adam"] = config.use_adam;
  j["config"]["max_halvings"] = config.max_halvings;
  j["embeddings"] = EmbeddingsToJson(model.embeddings);
  j["W"] = MatrixToJson(model.W);
  j["w"] = VectorToJson(model.w);
  j["loss_trajectory"] = report.loss_trajectory;
  j["lr_trajectory"] = report.lr_trajectory;
  j["halvings"] = report.halvings;
  j["degenerate_attention"] = report.degenerate_attention;
  WriteArtifact(path, "nirec-model", j);
}

NIRecModel LoadNIRecModel(const std::filesystem::path& path,
                          std::shared_ptr<const SocialGraph> graph) {
  const Json j = ReadArtifact(path, "nirec-model");
  NIRecModel m;
  try {
    m.embeddings = EmbeddingsFromJson(j.at("embeddings"));
    m.W = MatrixFromJson(j.at("W"), "W");
    m.w = VectorFromJson(j.at("w"), "w");
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (m.W.rows() != m.dim() || m.W.cols() != m.dim() || m.w.size() != 2 * m.dim()) {
    throw InputError(fmt::format("{}: inconsistent estimator dims", path.string()));
  }
  if (graph == nullptr || graph->num_users() != m.embeddings.num_users()) {
    throw InputError(fmt::format("{}: graph does not match model users", path.string()));
  }
  m.graph = std::move(graph);
  return m;
}

}  // namespace nirec
