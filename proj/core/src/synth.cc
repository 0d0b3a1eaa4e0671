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

#include "nirec/synth.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <fmt/format.h>

#include "json_io.h"

namespace nirec {

void SynthConfig::Validate() const {
  if (n_users < 2 || n_items < 2) throw InputError("synth: need at least 2 users and items");
  if (n_communities < 1 || n_communities > n_users) {
    throw InputError("synth: n_communities must be in [1, n_users]");
  }
  if (latent_dim < 1) throw InputError("synth: latent_dim must be positive");
  if (mean_out_degree < 0 || mean_out_degree >= n_users - 1) {
    throw InputError("synth: mean_out_degree out of range");
  }
  if (homophily < 0 || homophily > 1) throw InputError("synth: homophily must be in [0, 1]");
  if (ratings_per_user < 1 || ratings_per_user > n_items) {
    throw InputError("synth: ratings_per_user out of range");
  }
  if (taste_noise < 0 || rating_noise < 0 || popularity_skew < 0) {
    throw InputError("synth: noise and skew must be nonnegative");
  }
}

SynthCorpus GenerateCorpus(const SynthConfig& config) {
  config.Validate();
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d = config.latent_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<std::vector<double>> centres(config.n_communities, std::vector<double>(d));
  for (auto& c : centres) {
    for (double& x : c) x = normal(rng);
  }
  std::vector<int> community(config.n_users);
  std::vector<std::vector<int>> members(config.n_communities);
  for (int u = 0; u < config.n_users; ++u) {
    community[u] = static_cast<int>(UniformIndex(rng, config.n_communities));
    members[community[u]].push_back(u);
  }
  std::vector<std::vector<double>> taste(config.n_users, std::vector<double>(d));
  for (int u = 0; u < config.n_users; ++u) {
    for (int k = 0; k < d; ++k) {
      taste[u][k] = centres[community[u]][k] + config.taste_noise * normal(rng);
    }
  }
  std::vector<std::vector<double>> traits(config.n_items, std::vector<double>(d));
  for (auto& t : traits) {
    for (double& x : t) x = normal(rng);
  }
  std::vector<double> item_bias(config.n_items);
  for (double& b : item_bias) b = 0.3 * normal(rng);

  SynthCorpus out;
  // Trust: geometric out-degree, in-community with probability `homophily`.
  std::geometric_distribution<int> degree(1.0 / (1.0 + config.mean_out_degree));
  for (int u = 0; u < config.n_users; ++u) {
    const int want = std::min(degree(rng), config.n_users - 1);
    std::unordered_set<int> chosen;
    int attempts = 0;
    while (static_cast<int>(chosen.size()) < want && attempts++ < 50 * (want + 1)) {
      int v;
      const auto& pool = members[community[u]];
      if (Uniform01(rng) < config.homophily && pool.size() > 1) {
        v = pool[UniformIndex(rng, pool.size())];
      } else {
        v = static_cast<int>(UniformIndex(rng, config.n_users));
      }
      if (v != u) chosen.insert(v);
    }
    std::vector<int> sorted(chosen.begin(), chosen.end());
    std::sort(sorted.begin(), sorted.end());
    for (int v : sorted) {
      out.trust.emplace_back(config.user_id_offset + u, config.user_id_offset + v);
    }
  }

  // Ratings: items drawn by popularity tilted toward the user's taste.
  std::vector<double> popularity(config.n_items);
  for (int i = 0; i < config.n_items; ++i) {
    popularity[i] = std::pow(1.0 + i, -config.popularity_skew);
  }
  std::poisson_distribution<int> count(config.ratings_per_user);
  std::vector<double> weights(config.n_items);
  for (int u = 0; u < config.n_users; ++u) {
    std::vector<double> affinity(config.n_items);
    for (int i = 0; i < config.n_items; ++i) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += taste[u][k] * traits[i][k];
      affinity[i] = dot * scale + item_bias[i];
      weights[i] = popularity[i] * std::exp(affinity[i]);
    }
    const int want = std::clamp(count(rng), 1, config.n_items);
    std::vector<int> items;
    std::vector<double> w = weights;
    for (int n = 0; n < want; ++n) {
      std::discrete_distribution<int> pick(w.begin(), w.end());
      const int i = pick(rng);
      items.push_back(i);
      w[i] = 0.0;
    }
    std::sort(items.begin(), items.end());
    for (int i : items) {
      const double raw = 3.2 + 1.2 * affinity[i] + config.rating_noise * normal(rng);
      const double r = std::clamp(std::round(raw), 1.0, 5.0);
      out.ratings.push_back({config.user_id_offset + u, config.item_id_offset + i, r});
    }
  }
  return out;
}

void WriteCorpus(const SynthCorpus& corpus,
                 const std::filesystem::path& ratings_path,
                 const std::filesystem::path& trust_path) {
  std::string ratings;
  for (const auto& r : corpus.ratings) {
    ratings += fmt::format("{} {} {}\n", r.user, r.item, r.rating);
  }
  std::string trust;
  for (const auto& [a, b] : corpus.trust) trust += fmt::format("{} {}\n", a, b);
  WriteTextFile(ratings_path, ratings);
  WriteTextFile(trust_path, trust);
}

}  // namespace nirec
