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

#ifndef NIREC_CORPUS_H_
#define NIREC_CORPUS_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nirec/common.h"

namespace nirec {

// A rating as read from disk, before id remapping.
struct RawRating {
  RawId user = 0;
  RawId item = 0;
  double rating = 0.0;
};

// A rating over dense ids.
struct InteractionRecord {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;

  friend bool operator==(const InteractionRecord&,
                         const InteractionRecord&) = default;
};

// Which whitespace/comma separated columns (0-based) hold each field.
struct ColumnSpec {
  int user_col = 0;
  int item_col = 1;
  int rating_col = 2;
};

struct RatingsFile {
  std::vector<RawRating> records;
  std::size_t clamped = 0;  // ratings pulled back into [1, 5]
};

struct TrustFile {
  std::vector<std::pair<RawId, RawId>> edges;  // sorted, unique
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

RatingsFile LoadRatings(const std::filesystem::path& path,
                        const ColumnSpec& columns = {});
TrustFile LoadTrust(const std::filesystem::path& path);

// Directed trust network over dense user ids. An edge (u, v) means u trusts
// v, so v is in N_u and can influence u.
class SocialGraph {
 public:
  SocialGraph() = default;
  // Edges may arrive in any order; duplicates are merged, self-loops
  // rejected with InputError.
  SocialGraph(UserId n_users, std::span<const std::pair<UserId, UserId>> edges);

  UserId num_users() const { return n_users_; }
  std::size_t num_edges() const { return targets_.size(); }

  // N_u, ascending. Throws InputError for out-of-range ids.
  std::span<const UserId> Neighbors(UserId u) const;
  // Users v with u in N_v, ascending.
  std::span<const UserId> Followers(UserId u) const;
  bool HasEdge(UserId from, UserId to) const;

  std::vector<std::pair<UserId, UserId>> Edges() const;

  // Copy with the given edges removed (edges not present are ignored).
  SocialGraph WithoutEdges(
      std::span<const std::pair<UserId, UserId>> removed) const;

  friend bool operator==(const SocialGraph&, const SocialGraph&) = default;

 private:
  UserId n_users_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<UserId> targets_;
  std::vector<std::size_t> rev_offsets_{0};
  std::vector<UserId> rev_targets_;
};

struct Dataset {
  UserId n_users = 0;
  ItemId n_items = 0;
  std::vector<InteractionRecord> interactions;  // sorted by (user, item)
  SocialGraph graph;
  std::vector<RawId> user_raw_ids;  // dense id -> raw id
  std::vector<RawId> item_raw_ids;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  std::size_t n_social_edges = 0;
  double edge_density = 0.0;
  // Sum over observed pairs (u, i) of |{u' in N_u : (u', i) observed}|.
  std::size_t n_influential_pairs = 0;
};

// Deduplicates (keeping the last rating per pair), then iteratively drops
// users and items with fewer than k ratings, prunes trust edges touching
// dropped users, and remaps survivors to dense ids by ascending raw id.
// Throws InputError when nothing survives.
Dataset KCoreFilter(std::span<const RawRating> records,
                    std::span<const std::pair<RawId, RawId>> edges, int k);

// Influential-pair count over an arbitrary observed set of (user, item)
// pairs, given as packed keys (PackPair).
std::size_t CountInfluentialPairs(const SocialGraph& graph,
                                  std::span<const std::uint64_t> observed);

DatasetStats ComputeStats(
    const Dataset& dataset,
    std::optional<std::span<const std::uint64_t>> observed = std::nullopt);

void SaveDataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset LoadDataset(const std::filesystem::path& path);

}  // namespace nirec

#endif  // NIREC_CORPUS_H_
