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

#ifndef NIREC_GRADCHECK_H_
#define NIREC_GRADCHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nirec/backbones.h"

namespace nirec {

// One scalar parameter under test: where it lives and what the analytic
// gradient claims for it.
struct GradCoordinate {
  double* param = nullptr;
  double analytic = 0.0;
  std::string label;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
  std::string worst;  // label of the worst coordinate
};

// Central differences (f(x+h) - f(x-h)) / 2h against the analytic values.
// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
// near-zero gradients from reporting pure round-off.
GradCheckResult CheckGradients(const std::function<double()>& loss,
                               std::span<GradCoordinate> coords,
                               double h = 1e-4, double floor = 1e-3);

// Picks up to n coordinates: all of them when the pool is no larger than n,
// otherwise a seeded sample without replacement.
std::vector<GradCoordinate> SampleCoordinates(std::vector<GradCoordinate> pool,
                                              std::size_t n, std::uint64_t seed);

// Coordinates for the given rows of an embedding table pair.
void AppendEmbeddingCoordinates(EmbeddingTable& params,
                                const EmbeddingTable& grad,
                                std::span<const UserId> users,
                                std::span<const ItemId> items,
                                std::vector<GradCoordinate>& out);

GradCheckResult CheckMFGradients(const EmbeddingTable& params,
                                 std::span<const InteractionRecord> batch,
                                 double l2, std::size_t n_coords,
                                 std::uint64_t seed);
GradCheckResult CheckBprGradients(const EmbeddingTable& params,
                                  std::span<const BprTriple> batch, double l2,
                                  std::size_t n_coords, std::uint64_t seed);

}  // namespace nirec

#endif  // NIREC_GRADCHECK_H_
