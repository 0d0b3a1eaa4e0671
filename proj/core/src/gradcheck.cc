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

#include "nirec/gradcheck.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace nirec {

GradCheckResult CheckGradients(const std::function<double()>& loss,
                               std::span<GradCoordinate> coords, double h,
                               double floor) {
  GradCheckResult result;
  for (auto& c : coords) {
    const double saved = *c.param;
    *c.param = saved + h;
    const double up = loss();
    *c.param = saved - h;
    const double down = loss();
    *c.param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(c.analytic), std::abs(numeric), floor});
    const double rel = std::abs(c.analytic - numeric) / denom;
    if (result.n_checked == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = c.label;
    }
    ++result.n_checked;
  }
  return result;
}

std::vector<GradCoordinate> SampleCoordinates(std::vector<GradCoordinate> pool,
                                              std::size_t n, std::uint64_t seed) {
  if (pool.size() <= n) return pool;
  Rng rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  return pool;
}

void AppendEmbeddingCoordinates(EmbeddingTable& params,
                                const EmbeddingTable& grad,
                                std::span<const UserId> users,
                                std::span<const ItemId> items,
                                std::vector<GradCoordinate>& out) {
  std::vector<UserId> us(users.begin(), users.end());
  std::vector<ItemId> is(items.begin(), items.end());
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());
  std::sort(is.begin(), is.end());
  is.erase(std::unique(is.begin(), is.end()), is.end());
  for (UserId u : us) {
    for (int k = 0; k < params.dim(); ++k) {
      out.push_back({&params.users(u, k), grad.users(u, k),
                     fmt::format("user[{}][{}]", u, k)});
    }
  }
  for (ItemId i : is) {
    for (int k = 0; k < params.dim(); ++k) {
      out.push_back({&params.items(i, k), grad.items(i, k),
                     fmt::format("item[{}][{}]", i, k)});
    }
  }
}

GradCheckResult CheckMFGradients(const EmbeddingTable& params,
                                 std::span<const InteractionRecord> batch,
                                 double l2, std::size_t n_coords,
                                 std::uint64_t seed) {
  EmbeddingTable p = params;
  EmbeddingTable grad;
  MFBatchLossAndGrad(p, batch, l2, &grad);
  std::vector<UserId> users;
  std::vector<ItemId> items;
  for (const auto& r : batch) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  std::vector<GradCoordinate> pool;
  AppendEmbeddingCoordinates(p, grad, users, items, pool);
  auto coords = SampleCoordinates(std::move(pool), n_coords, seed);
  return CheckGradients([&] { return MFBatchLossAndGrad(p, batch, l2, nullptr); },
                        coords);
}

GradCheckResult CheckBprGradients(const EmbeddingTable& params,
                                  std::span<const BprTriple> batch, double l2,
                                  std::size_t n_coords, std::uint64_t seed) {
  EmbeddingTable p = params;
  EmbeddingTable grad;
  BprBatchLossAndGrad(p, batch, l2, &grad);
  std::vector<UserId> users;
  std::vector<ItemId> items;
  for (const auto& t : batch) {
    users.push_back(t.user);
    items.push_back(t.positive);
    items.push_back(t.negative);
  }
  std::vector<GradCoordinate> pool;
  AppendEmbeddingCoordinates(p, grad, users, items, pool);
  auto coords = SampleCoordinates(std::move(pool), n_coords, seed);
  return CheckGradients([&] { return BprBatchLossAndGrad(p, batch, l2, nullptr); },
                        coords);
}

}  // namespace nirec
