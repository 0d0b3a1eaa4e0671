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

#include "nirec/simworld.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "json_io.h"
#include "serialize.h"

namespace nirec {
namespace {

using Json = nlohmann::json;

std::size_t PairIndex(UserId u, ItemId i, ItemId n_items) {
  return static_cast<std::size_t>(u) * static_cast<std::size_t>(n_items) +
         static_cast<std::size_t>(i);
}

struct Attempt {
  std::vector<std::size_t> exposed;  // pair indices, ascending
  std::size_t influential = 0;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0;
};

// Exposed-neighbor counts cnt(u, i) = |{u' in N_u : (u', i) exposed}|.
void CountExposedNeighbors(const SocialGraph& graph, ItemId n_items,
                           std::span<const std::size_t> exposed,
                           std::vector<std::uint16_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0);
  const auto m = static_cast<std::size_t>(n_items);
  for (std::size_t idx : exposed) {
    const auto v = static_cast<UserId>(idx / m);
    const auto i = static_cast<ItemId>(idx % m);
    for (UserId u : graph.Followers(v)) {
      auto& c = counts[PairIndex(u, i, n_items)];
      if (c < UINT16_MAX) ++c;
    }
  }
}

class ExposureSampler {
 public:
  ExposureSampler(const SimOracle& oracle, const PropensityParams& params,
                  std::uint64_t seed)
      : oracle_(oracle), params_(params) {
    n_users_ = oracle.embeddings.num_users();
    n_items_ = oracle.embeddings.num_items();
    const std::size_t n = static_cast<std::size_t>(n_users_) *
                          static_cast<std::size_t>(n_items_);
    p1_.resize(n);
    p2_.resize(n);
    draw_.resize(n);
    counts_.resize(n);
    for (UserId u = 0; u < n_users_; ++u) {
      for (ItemId i = 0; i < n_items_; ++i) {
        p1_[PairIndex(u, i, n_items_)] = Sigmoid(oracle.Eta(u, i));
      }
    }
    Rng random_rng(DeriveSeed(seed, 1));
    for (double& p : p2_) p = Uniform01(random_rng);
    Rng draw_rng(DeriveSeed(seed, 2));
    for (double& d : draw_) d = Uniform01(draw_rng);
  }

  Attempt Run(double alpha3) {
    Attempt a;
    const double rest = params_.alpha1 + params_.alpha2;
    a.alpha3 = alpha3;
    if (rest > 0) {
      a.alpha1 = (1.0 - alpha3) * params_.alpha1 / rest;
      a.alpha2 = (1.0 - alpha3) * params_.alpha2 / rest;
    } else {
      a.alpha1 = a.alpha2 = (1.0 - alpha3) / 2.0;
    }
    const std::size_t n = p1_.size();
    const std::size_t target = std::min(params_.target_size, n);
    std::vector<double> key(n);
    std::vector<std::size_t> order(n);
    std::fill(counts_.begin(), counts_.end(), 0);
    for (int round = 0; round < params_.rounds; ++round) {
      for (std::size_t k = 0; k < n; ++k) {
        const double p3 =
            std::min(1.0, static_cast<double>(counts_[k]) / params_.saturation);
        const double prop = a.alpha1 * p1_[k] + a.alpha2 * p2_[k] +
                            a.alpha3 * p3 + params_.propensity_floor;
        key[k] = draw_[k] / prop;
      }
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto by_key = [&](std::size_t x, std::size_t y) {
        return key[x] < key[y] || (key[x] == key[y] && x < y);
      };
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target),
                       order.end(), by_key);
      a.exposed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
      std::sort(a.exposed.begin(), a.exposed.end());
      CountExposedNeighbors(*oracle_.graph, n_items_, a.exposed, counts_);
    }
    a.influential = 0;
    for (std::size_t idx : a.exposed) a.influential += counts_[idx];
    return a;
  }

  ExposureMatrix ToMatrix(const Attempt& a) const {
    ExposureMatrix m(n_users_, n_items_);
    const auto items = static_cast<std::size_t>(n_items_);
    for (std::size_t idx : a.exposed) {
      m.Insert(static_cast<UserId>(idx / items), static_cast<ItemId>(idx % items));
    }
    return m;
  }

 private:
  const SimOracle& oracle_;
  PropensityParams params_;
  UserId n_users_ = 0;
  ItemId n_items_ = 0;
  std::vector<double> p1_, p2_, draw_;
  std::vector<std::uint16_t> counts_;
};

double RelativeMiss(std::size_t achieved, std::size_t target) {
  if (target == 0) return achieved == 0 ? 0.0 : 1.0;
  return std::abs(static_cast<double>(achieved) - static_cast<double>(target)) /
         static_cast<double>(target);
}

template <typename T>
T ParseField(std::string_view s, std::string_view what, std::size_t line_no) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError(fmt::format("line {}: bad {} '{}'", line_no, what, s));
  }
  return v;
}

std::vector<std::string_view> Words(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    if (pos > start) out.push_back(line.substr(start, pos - start));
  }
  return out;
}

}  // namespace

void ExposureMatrix::Insert(UserId u, ItemId i) {
  if (u < 0 || u >= n_users_ || i < 0 || i >= n_items_) {
    throw InputError(fmt::format("exposure ({}, {}) out of range", u, i));
  }
  keys_.insert(PackPair(u, i));
}

std::vector<std::uint64_t> ExposureMatrix::SortedKeys() const {
  std::vector<std::uint64_t> keys(keys_.begin(), keys_.end());
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::vector<std::uint8_t> NeighborTreatments(const SocialGraph& graph,
                                             const ExposureMatrix& exposure,
                                             UserId u, ItemId i) {
  const auto nbrs = graph.Neighbors(u);
  std::vector<std::uint8_t> t(nbrs.size());
  for (std::size_t j = 0; j < nbrs.size(); ++j) {
    t[j] = exposure.Contains(nbrs[j], i) ? 1 : 0;
  }
  return t;
}

double SimOracle::NeighborContribution(UserId u, UserId neighbor,
                                       ItemId i) const {
  const auto n = graph->Neighbors(u).size();
  if (n == 0) return 0.0;
  const double social =
      Sigmoid(embeddings.users.row(u).dot(embeddings.users.row(neighbor)));
  return social * Eta(neighbor, i) / std::sqrt(static_cast<double>(n));
}

double SimOracle::Delta(UserId u, ItemId i,
                        std::span<const std::uint8_t> treatments) const {
  const auto nbrs = graph->Neighbors(u);
  if (nbrs.empty()) return 0.0;
  if (treatments.size() != nbrs.size()) {
    throw InputError(fmt::format("user {} has {} neighbors but {} treatments",
                                 u, nbrs.size(), treatments.size()));
  }
  const auto eu = embeddings.users.row(u);
  double sum = 0.0;
  for (std::size_t j = 0; j < nbrs.size(); ++j) {
    if (!treatments[j]) continue;
    sum += Sigmoid(eu.dot(embeddings.users.row(nbrs[j]))) * Eta(nbrs[j], i);
  }
  return sum / std::sqrt(static_cast<double>(nbrs.size()));
}

double SimOracle::Delta(UserId u, ItemId i, const ExposureMatrix& exposure) const {
  return Delta(u, i, NeighborTreatments(*graph, exposure, u, i));
}

void PropensityParams::Validate() const {
  const auto in01 = [](double a) { return a >= 0.0 && a <= 1.0; };
  if (!in01(alpha1) || !in01(alpha2) || !in01(alpha3) ||
      std::abs(alpha1 + alpha2 + alpha3 - 1.0) > 1e-9) {
    throw InputError(fmt::format(
        "propensity weights must lie in [0,1] and sum to 1 (got {}, {}, {})",
        alpha1, alpha2, alpha3));
  }
  if (rounds < 1 || !(saturation > 0) || propensity_floor <= 0 ||
      max_restarts < 0) {
    throw InputError("propensity rounds, saturation and floor must be positive");
  }
}

ExposureSample SampleExposure(const SimOracle& oracle,
                              const PropensityParams& params,
                              std::uint64_t seed) {
  params.Validate();
  const std::size_t n_pairs =
      static_cast<std::size_t>(oracle.embeddings.num_users()) *
      static_cast<std::size_t>(oracle.embeddings.num_items());
  if (params.target_size == 0 || params.target_size > n_pairs) {
    throw InputError(fmt::format("target |D| = {} not achievable with {} pairs",
                                 params.target_size, n_pairs));
  }
  ExposureSampler sampler(oracle, params, seed);

  ExposureDiagnostics diag;
  Attempt best = sampler.Run(params.alpha3);
  int restarts = 0;
  const auto miss = [&](const Attempt& a) {
    return RelativeMiss(a.influential, params.target_influential);
  };
  if (params.target_influential > 0 &&
      miss(best) > params.influential_tolerance) {
    Attempt lo = sampler.Run(0.0);
    Attempt hi = sampler.Run(1.0);
    restarts = 2;
    for (Attempt* a : {&lo, &hi}) {
      if (miss(*a) < miss(best)) best = *a;
    }
    const double target = static_cast<double>(params.target_influential);
    const bool increasing = hi.influential >= lo.influential;
    const auto below = [&](const Attempt& a) {
      return increasing ? static_cast<double>(a.influential) < target
                        : static_cast<double>(a.influential) > target;
    };
    if (below(lo) != below(hi)) {
      double a_lo = 0.0, a_hi = 1.0;
      while (restarts < params.max_restarts &&
             miss(best) > params.influential_tolerance) {
        const double mid = 0.5 * (a_lo + a_hi);
        Attempt m = sampler.Run(mid);
        ++restarts;
        if (miss(m) < miss(best)) best = m;
        if (below(m)) {
          a_lo = mid;
        } else {
          a_hi = mid;
        }
      }
    } else {
      diag.note = fmt::format(
          "influential target {} outside reachable range [{}, {}] over alpha3 "
          "in [0, 1]",
          params.target_influential, std::min(lo.influential, hi.influential),
          std::max(lo.influential, hi.influential));
    }
  }

  diag.achieved_size = best.exposed.size();
  diag.achieved_influential = best.influential;
  diag.alpha1 = best.alpha1;
  diag.alpha2 = best.alpha2;
  diag.alpha3 = best.alpha3;
  diag.restarts = restarts;
  diag.size_matched =
      RelativeMiss(diag.achieved_size, params.target_size) <= params.size_tolerance;
  diag.influential_matched =
      params.target_influential == 0 ||
      miss(best) <= params.influential_tolerance;
  if (!diag.influential_matched && diag.note.empty()) {
    diag.note = fmt::format("alpha3 search stopped after {} restarts", restarts);
  }
  return {sampler.ToMatrix(best), diag};
}

std::vector<SemiSyntheticRecord> GenerateFeedback(const SimOracle& oracle,
                                                  const ExposureMatrix& exposure,
                                                  std::uint64_t seed) {
  if (exposure.empty()) throw InputError("feedback generation needs exposures");
  Rng rng(seed);
  std::vector<SemiSyntheticRecord> out;
  out.reserve(exposure.size());
  for (std::uint64_t key : exposure.SortedKeys()) {
    const auto u = static_cast<UserId>(key >> 32);
    const auto i = static_cast<ItemId>(key & 0xffffffffu);
    const double p = oracle.OutcomeProb(u, i, exposure);
    out.push_back({u, i, Uniform01(rng) < p ? 1 : 0, p});
  }
  return out;
}

std::vector<UserId> NeighborUnion(const SocialGraph& graph,
                                  std::span<const UserId> group) {
  std::vector<UserId> sorted_group(group.begin(), group.end());
  std::sort(sorted_group.begin(), sorted_group.end());
  std::vector<UserId> out;
  for (UserId u : group) {
    for (UserId v : graph.Neighbors(u)) {
      if (!std::binary_search(sorted_group.begin(), sorted_group.end(), v)) {
        out.push_back(v);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool QualifiesAsTarget(const SimOracle& oracle, UserId u, ItemId i, double t) {
  if (oracle.Eta(u, i) > t) return false;
  for (UserId v : oracle.graph->Neighbors(u)) {
    if (oracle.Eta(v, i) > 0.0) return true;
  }
  return false;
}

TargetSelection SelectTargets(const SimOracle& oracle, int group_size,
                              double threshold, int n_items_wanted,
                              std::uint64_t seed) {
  if (group_size < 1) throw InputError("target group size must be >= 1");
  if (n_items_wanted < 1) throw InputError("need at least one target item");
  Rng rng(seed);
  std::vector<ItemId> items(static_cast<std::size_t>(oracle.embeddings.num_items()));
  std::iota(items.begin(), items.end(), ItemId{0});
  std::shuffle(items.begin(), items.end(), rng);

  TargetSelection sel;
  std::size_t best_count = 0;
  const UserId n_users = oracle.embeddings.num_users();
  for (ItemId item : items) {
    if (static_cast<int>(sel.specs.size()) >= n_items_wanted) break;
    ++sel.examined;
    std::vector<UserId> qualified;
    for (UserId u = 0; u < n_users; ++u) {
      if (QualifiesAsTarget(oracle, u, item, threshold)) qualified.push_back(u);
    }
    best_count = std::max(best_count, qualified.size());
    if (qualified.size() < static_cast<std::size_t>(group_size)) {
      ++sel.rejected;
      continue;
    }
    std::shuffle(qualified.begin(), qualified.end(), rng);
    qualified.resize(static_cast<std::size_t>(group_size));
    std::sort(qualified.begin(), qualified.end());
    TargetSpec spec;
    spec.target_item = item;
    spec.threshold = threshold;
    spec.neighbor_users = NeighborUnion(*oracle.graph, qualified);
    spec.target_users = std::move(qualified);
    sel.specs.push_back(std::move(spec));
  }
  if (sel.specs.empty()) {
    throw InputError(fmt::format(
        "no target item accepted: {} of {} items rejected (largest qualified "
        "group {}, needed {})",
        sel.rejected, sel.examined, best_count, group_size));
  }
  return sel;
}

std::string ValidateTargetSpec(const TargetSpec& spec, const SimOracle& oracle) {
  const auto& g = *oracle.graph;
  if (!std::is_sorted(spec.target_users.begin(), spec.target_users.end())) {
    return "target users not sorted";
  }
  for (UserId u : spec.target_users) {
    if (oracle.Eta(u, spec.target_item) > spec.threshold) {
      return fmt::format("user {} exceeds the interest threshold", u);
    }
    bool interested = false;
    for (UserId v : g.Neighbors(u)) interested |= oracle.Eta(v, spec.target_item) > 0;
    if (!interested) return fmt::format("user {} has no interested neighbor", u);
  }
  if (spec.neighbor_users != NeighborUnion(g, spec.target_users)) {
    return "neighbor set is not the neighbor union minus the group";
  }
  return {};
}

void SaveSemiSynthetic(const std::filesystem::path& path,
                       const SemiSyntheticHeader& h,
                       std::span<const SemiSyntheticRecord> records) {
  std::string out = "# nirec semi-synthetic v1\n";
  const auto& p = h.propensity;
  const auto& d = h.diagnostics;
  out += fmt::format("# seed {}\n# beta {}\n", h.seed, h.beta);
  out += fmt::format("# alpha1 {}\n# alpha2 {}\n# alpha3 {}\n", p.alpha1,
                     p.alpha2, p.alpha3);
  out += fmt::format("# target_size {}\n# target_influential {}\n",
                     p.target_size, p.target_influential);
  out += fmt::format("# rounds {}\n# saturation {}\n", p.rounds, p.saturation);
  out += fmt::format("# achieved_size {}\n# achieved_influential {}\n",
                     d.achieved_size, d.achieved_influential);
  out += fmt::format("# used_alpha1 {}\n# used_alpha2 {}\n# used_alpha3 {}\n",
                     d.alpha1, d.alpha2, d.alpha3);
  out += fmt::format("# restarts {}\n# size_matched {}\n# influential_matched {}\n",
                     d.restarts, d.size_matched ? 1 : 0,
                     d.influential_matched ? 1 : 0);
  out += "# columns user item y truth_prob\n";
  for (const auto& r : records) {
    out += fmt::format("{} {} {} {}\n", r.user, r.item, r.y, r.truth_prob);
  }
  WriteTextFile(path, out);
}

std::vector<SemiSyntheticRecord> LoadSemiSynthetic(
    const std::filesystem::path& path, SemiSyntheticHeader* header) {
  std::istringstream in(ReadTextFile(path));
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::string, std::less<>> meta;
  std::vector<SemiSyntheticRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto w = Words(std::string_view(line).substr(1));
      if (w.size() == 2) meta[std::string(w[0])] = std::string(w[1]);
      continue;
    }
    const auto w = Words(line);
    if (w.size() != 4) {
      throw InputError(fmt::format("{}:{}: expected 4 columns", path.string(), line_no));
    }
    SemiSyntheticRecord r;
    r.user = ParseField<UserId>(w[0], "user", line_no);
    r.item = ParseField<ItemId>(w[1], "item", line_no);
    r.y = ParseField<int>(w[2], "label", line_no);
    r.truth_prob = ParseField<double>(w[3], "truth_prob", line_no);
    if (r.y != 0 && r.y != 1) {
      throw InputError(fmt::format("{}:{}: label must be 0/1", path.string(), line_no));
    }
    out.push_back(r);
  }
  if (meta.empty() || !line_no) {
    throw InputError(fmt::format("{}: not a semi-synthetic dataset", path.string()));
  }
  if (header != nullptr) {
    const auto get = [&](std::string_view key) -> std::string_view {
      auto it = meta.find(key);
      if (it == meta.end()) {
        throw InputError(fmt::format("{}: header lacks '{}'", path.string(), key));
      }
      return it->second;
    };
    header->seed = ParseField<std::uint64_t>(get("seed"), "seed", 0);
    header->beta = ParseField<double>(get("beta"), "beta", 0);
    auto& p = header->propensity;
    p.alpha1 = ParseField<double>(get("alpha1"), "alpha1", 0);
    p.alpha2 = ParseField<double>(get("alpha2"), "alpha2", 0);
    p.alpha3 = ParseField<double>(get("alpha3"), "alpha3", 0);
    p.target_size = ParseField<std::size_t>(get("target_size"), "target_size", 0);
    p.target_influential =
        ParseField<std::size_t>(get("target_influential"), "target_influential", 0);
    p.rounds = ParseField<int>(get("rounds"), "rounds", 0);
    p.saturation = ParseField<double>(get("saturation"), "saturation", 0);
    auto& d = header->diagnostics;
    d.achieved_size = ParseField<std::size_t>(get("achieved_size"), "achieved_size", 0);
    d.achieved_influential = ParseField<std::size_t>(
        get("achieved_influential"), "achieved_influential", 0);
    d.alpha1 = ParseField<double>(get("used_alpha1"), "used_alpha1", 0);
    d.alpha2 = ParseField<double>(get("used_alpha2"), "used_alpha2", 0);
    d.alpha3 = ParseField<double>(get("used_alpha3"), "used_alpha3", 0);
    d.restarts = ParseField<int>(get("restarts"), "restarts", 0);
    d.size_matched = get("size_matched") == "1";
    d.influential_matched = get("influential_matched") == "1";
  }
  return out;
}

void SaveTargetSpecs(const std::filesystem::path& path,
                     std::span<const TargetSpec> specs) {
  std::string out = "# nirec target-specs v1\n";
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    out += fmt::format("spec {}\nitem {}\nthreshold {}\n", s, spec.target_item,
                       spec.threshold);
    out += "targets";
    for (UserId u : spec.target_users) out += fmt::format(" {}", u);
    out += "\nneighbors";
    for (UserId u : spec.neighbor_users) out += fmt::format(" {}", u);
    out += "\nend\n";
  }
  WriteTextFile(path, out);
}

std::vector<TargetSpec> LoadTargetSpecs(const std::filesystem::path& path) {
  std::istringstream in(ReadTextFile(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<TargetSpec> specs;
  bool open = false;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# nirec target-specs v1", 0) == 0) header_seen = true;
    if (line.empty() || line[0] == '#') continue;
    const auto w = Words(line);
    if (w.empty()) continue;
    const auto bad = [&] {
      return InputError(fmt::format("{}:{}: unexpected '{}'", path.string(),
                                    line_no, line));
    };
    if (w[0] == "spec") {
      if (open) throw bad();
      specs.emplace_back();
      open = true;
    } else if (!open) {
      throw bad();
    } else if (w[0] == "item" && w.size() == 2) {
      specs.back().target_item = ParseField<ItemId>(w[1], "item", line_no);
    } else if (w[0] == "threshold" && w.size() == 2) {
      specs.back().threshold = ParseField<double>(w[1], "threshold", line_no);
    } else if (w[0] == "targets" || w[0] == "neighbors") {
      auto& dst = w[0] == "targets" ? specs.back().target_users
                                    : specs.back().neighbor_users;
      for (std::size_t k = 1; k < w.size(); ++k) {
        dst.push_back(ParseField<UserId>(w[k], "user", line_no));
      }
    } else if (w[0] == "end") {
      open = false;
    } else {
      throw bad();
    }
  }
  if (!header_seen || open) {
    throw InputError(fmt::format("{}: not a complete target-spec file", path.string()));
  }
  return specs;
}

void SaveOracle(const SimOracle& oracle, const std::filesystem::path& path) {
  Json j;
  j["beta"] = oracle.beta;
  j["embeddings"] = EmbeddingsToJson(oracle.embeddings);
  WriteArtifact(path, "sim-oracle", j);
}

SimOracle LoadOracle(const std::filesystem::path& path,
                     std::shared_ptr<const SocialGraph> graph) {
  const Json j = ReadArtifact(path, "sim-oracle");
  SimOracle o;
  try {
    o.beta = j.at("beta").get<double>();
    o.embeddings = EmbeddingsFromJson(j.at("embeddings"));
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (graph == nullptr || graph->num_users() != o.embeddings.num_users()) {
    throw InputError(fmt::format("{}: graph does not match oracle users", path.string()));
  }
  o.graph = std::move(graph);
  return o;
}

}  // namespace nirec
