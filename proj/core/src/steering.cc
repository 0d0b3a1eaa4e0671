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

#include "nirec/steering.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

namespace nirec {

std::vector<std::uint8_t> ExperienceContext::DefaultBits() const {
  std::vector<std::uint8_t> bits(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) bits[j] = neighbors[j].o_ex;
  return bits;
}

ExperienceContext BuildExperience(const EmbeddingTable& experience_model, int k,
                                  ItemId target_item,
                                  std::span<const UserId> neighbors) {
  if (k < 1) throw InputError("experience list length k must be >= 1");
  if (experience_model.num_items() < k + 1) {
    throw InputError(fmt::format(
        "experience model scores {} items; top-{} needs at least {}",
        experience_model.num_items(), k, k + 1));
  }
  ExperienceContext ctx;
  ctx.k = k;
  ctx.target_item = target_item;
  ctx.neighbors.reserve(neighbors.size());
  for (UserId v : neighbors) {
    const auto scores = UserScores(experience_model, v);
    NeighborExperience ne;
    ne.user = v;
    ne.top = TopK(scores, k + 1);
    ne.r_target = scores[target_item];
    ne.r_kth = scores[ne.top[k - 1]];
    ne.r_next = scores[ne.top[k]];
    ne.o_ex = std::find(ne.top.begin(), ne.top.begin() + k, target_item) !=
                      ne.top.begin() + k
                  ? 1
                  : 0;
    ctx.neighbors.push_back(std::move(ne));
  }
  return ctx;
}

double Cost(const ExperienceContext& ctx, std::size_t index, std::uint8_t bit) {
  const auto& n = ctx.neighbors.at(index);
  if (bit == n.o_ex) return 0.0;
  return bit == 0 ? n.r_target - n.r_next : n.r_kth - n.r_target;
}

double TotalCost(const ExperienceContext& ctx, std::span<const std::uint8_t> bits) {
  if (bits.size() != ctx.neighbors.size()) {
    throw InputError("assignment length does not match the neighbor set");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < bits.size(); ++j) total += Cost(ctx, j, bits[j]);
  return total;
}

SteeringProblem::SteeringProblem(const OutcomePredictor& predictor,
                                 const TargetSpec& spec,
                                 const ExperienceContext& ctx,
                                 const ExposureMatrix* ambient)
    : predictor_(&predictor), spec_(&spec), ctx_(&ctx) {
  if (ctx.neighbors.size() != spec.neighbor_users.size() ||
      ctx.target_item != spec.target_item) {
    throw InputError("experience context does not match the target spec");
  }
  const auto& graph = predictor.graph();
  const auto& group = spec.target_users;
  const auto& bitset = spec.neighbor_users;
  affected_.resize(bitset.size());
  slots_.resize(group.size());
  for (std::size_t t = 0; t < group.size(); ++t) {
    const auto nbrs = graph.Neighbors(group[t]);
    auto& slots = slots_[t];
    slots.reserve(nbrs.size());
    for (std::size_t p = 0; p < nbrs.size(); ++p) {
      const UserId v = nbrs[p];
      if (std::binary_search(group.begin(), group.end(), v)) {
        slots.push_back({Slot::kTarget, 0, 1});
      } else if (auto it = std::lower_bound(bitset.begin(), bitset.end(), v);
                 it != bitset.end() && *it == v) {
        const auto idx = static_cast<std::uint32_t>(it - bitset.begin());
        slots.push_back({Slot::kBit, idx, 0});
        affected_[idx].emplace_back(t, p);
      } else {
        const std::uint8_t amb =
            ambient != nullptr && ambient->Contains(v, spec.target_item) ? 1 : 0;
        slots.push_back({Slot::kAmbient, 0, amb});
      }
    }
  }
}

std::vector<std::uint8_t> SteeringProblem::TargetTreatments(
    std::size_t target_index, std::span<const std::uint8_t> bits) const {
  const auto& slots = slots_.at(target_index);
  std::vector<std::uint8_t> t(slots.size());
  for (std::size_t p = 0; p < slots.size(); ++p) {
    t[p] = slots[p].kind == Slot::kBit ? bits[slots[p].index] : slots[p].ambient;
  }
  return t;
}

ObjectiveBreakdown SteeringProblem::Evaluate(std::span<const std::uint8_t> bits,
                                             double gamma) const {
  if (bits.size() != num_bits()) {
    throw InputError(fmt::format("assignment has {} bits, spec needs {}",
                                 bits.size(), num_bits()));
  }
  ObjectiveBreakdown b;
  b.gamma = gamma;
  for (std::size_t t = 0; t < slots_.size(); ++t) {
    b.steering_sum += predictor_->Predict(spec_->target_users[t],
                                          spec_->target_item,
                                          TargetTreatments(t, bits));
  }
  b.damage = TotalCost(*ctx_, bits);
  b.value = b.steering_sum - gamma * b.damage;
  return b;
}

TreatmentAssignment SteeringProblem::Greedy(double gamma) const {
  const std::size_t n = num_bits();
  TreatmentAssignment out;
  out.bits = ctx_->DefaultBits();
  std::vector<double> probs(slots_.size());
  double steering = 0.0;
  for (std::size_t t = 0; t < slots_.size(); ++t) {
    probs[t] = predictor_->Predict(spec_->target_users[t], spec_->target_item,
                                   TargetTreatments(t, out.bits));
    steering += probs[t];
  }
  double damage = TotalCost(*ctx_, out.bits);
  out.evaluations = 1;

  std::vector<char> frozen(n, 0);
  std::vector<double> cand_probs;
  std::vector<double> best_probs;
  while (out.frozen.size() < n) {
    const double current = steering - gamma * damage;
    double best_gain = 0.0;
    std::size_t best = n;
    double best_steering = 0.0, best_damage = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (frozen[j]) continue;
      cand_probs.clear();
      double s = steering;
      for (const auto& [t, p] : affected_[j]) {
        auto treat = TargetTreatments(t, out.bits);
        treat[p] ^= 1;
        const double q = predictor_->Predict(spec_->target_users[t],
                                             spec_->target_item, treat);
        cand_probs.push_back(q);
        s += q - probs[t];
      }
      const std::uint8_t bit = out.bits[j];
      const double dmg = damage - Cost(*ctx_, j, bit) + Cost(*ctx_, j, bit ^ 1);
      ++out.evaluations;
      const double gain = (s - gamma * dmg) - current;
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
        best_steering = s;
        best_damage = dmg;
        best_probs = cand_probs;
      }
    }
    if (best == n) break;
    out.bits[best] ^= 1;
    frozen[best] = 1;
    out.frozen.push_back(best);
    for (std::size_t k = 0; k < affected_[best].size(); ++k) {
      probs[affected_[best][k].first] = best_probs[k];
    }
    steering = best_steering;
    damage = best_damage;
  }
  out.breakdown = Evaluate(out.bits, gamma);
  return out;
}

TreatmentAssignment SteeringProblem::BruteForce(double gamma) const {
  const std::size_t n = num_bits();
  if (n > kMaxBruteForceBits) {
    throw InputError(fmt::format("brute force limited to {} bits, got {}",
                                 kMaxBruteForceBits, n));
  }
  TreatmentAssignment out;
  std::vector<std::uint8_t> bits(n);
  bool have = false;
  const std::uint64_t total = std::uint64_t{1} << n;
  // bits[0] is the most significant position, so ascending masks walk the
  // assignments in lexicographic order and the first maximum wins ties.
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t j = 0; j < n; ++j) bits[j] = (mask >> (n - 1 - j)) & 1;
    const ObjectiveBreakdown b = Evaluate(bits, gamma);
    ++out.evaluations;
    if (!have || b.value > out.breakdown.value) {
      have = true;
      out.bits = bits;
      out.breakdown = b;
    }
  }
  return out;
}

std::vector<SweepRecord> SweepGamma(const SteeringProblem& problem,
                                    std::span<const double> gamma_grid) {
  if (gamma_grid.empty()) throw InputError("gamma grid is empty");
  if (!std::is_sorted(gamma_grid.begin(), gamma_grid.end())) {
    throw InputError("gamma grid must be ascending");
  }
  std::vector<SweepRecord> out;
  out.reserve(gamma_grid.size());
  for (double g : gamma_grid) {
    const auto start = std::chrono::steady_clock::now();
    SweepRecord rec;
    rec.gamma = g;
    rec.assignment = problem.Greedy(g);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<double> GammaGrid(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) throw InputError("gamma grid needs lo <= hi, step > 0");
  std::vector<double> grid;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= n; ++k) {
    // Round to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004.
    grid.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
  }
  return grid;
}

TreatmentAssignment DirectBaseline(const EmbeddingTable& backbone,
                                   const TargetSpec& spec,
                                   const ExperienceContext& ctx, double gamma) {
  if (ctx.neighbors.size() != spec.neighbor_users.size()) {
    throw InputError("experience context does not match the target spec");
  }
  TreatmentAssignment out;
  out.bits.resize(spec.neighbor_users.size());
  double gain_sum = 0.0;
  for (std::size_t j = 0; j < out.bits.size(); ++j) {
    const double like =
        Sigmoid(backbone.Score(spec.neighbor_users[j], spec.target_item)) - 0.5;
    const double margin = like - gamma * (Cost(ctx, j, 1) - Cost(ctx, j, 0));
    out.bits[j] = margin > 0 ? 1 : (margin < 0 ? 0 : ctx.neighbors[j].o_ex);
    if (out.bits[j]) gain_sum += like;
    ++out.evaluations;
  }
  out.breakdown.gamma = gamma;
  out.breakdown.steering_sum = gain_sum;
  out.breakdown.damage = TotalCost(ctx, out.bits);
  out.breakdown.value = gain_sum - gamma * out.breakdown.damage;
  return out;
}

TreatmentAssignment SimBaseline(const EmbeddingTable& backbone,
                                const TargetSpec& spec,
                                const ExperienceContext& ctx, double gamma,
                                double beta,
                                std::shared_ptr<const SocialGraph> graph) {
  const SimOracle surrogate{backbone, beta, std::move(graph)};
  const OraclePredictor predictor(surrogate);
  return SteeringProblem(predictor, spec, ctx).Greedy(gamma);
}

std::string_view MethodName(Method m) {
  switch (m) {
    case Method::kNIRec: return "NIRec";
    case Method::kOracle: return "Oracle";
    case Method::kDirectMF: return "Direct-MF";
    case Method::kSimMF: return "Sim-MF";
    case Method::kDirectLGC: return "Direct-LGC";
    case Method::kSimLGC: return "Sim-LGC";
  }
  return "?";
}

Method ParseMethod(std::string_view name) {
  for (Method m : {Method::kNIRec, Method::kOracle, Method::kDirectMF,
                   Method::kSimMF, Method::kDirectLGC, Method::kSimLGC}) {
    if (MethodName(m) == name) return m;
  }
  throw InputError(fmt::format("unknown method '{}'", name));
}

}  // namespace nirec
