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


#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "nirec/corpus.h"
#include "nirec/synth.h"
#include "test_util.h"

namespace nirec {
namespace {

using testing::TempDir;
using testing::WriteFile;

TEST(LoadRatings, ParsesThreeLines) {
  TempDir dir;
  WriteFile(dir / "r.txt", "1 2 5\n1 3 4\n2 2 1\n");
  const auto f = LoadRatings(dir / "r.txt");
  ASSERT_EQ(f.records.size(), 3u);
  EXPECT_EQ(f.records[1].user, 1);
  EXPECT_EQ(f.records[1].item, 3);
  EXPECT_DOUBLE_EQ(f.records[1].rating, 4.0);
  EXPECT_EQ(f.clamped, 0u);
}

TEST(LoadRatings, ClampsOutOfRange) {
  TempDir dir;
  WriteFile(dir / "r.txt", "1 2 9\n");
  const auto f = LoadRatings(dir / "r.txt");
  ASSERT_EQ(f.records.size(), 1u);
  EXPECT_DOUBLE_EQ(f.records[0].rating, 5.0);
  EXPECT_EQ(f.clamped, 1u);
}

TEST(LoadRatings, ColumnSpecSelectsFields) {
  TempDir dir;
  WriteFile(dir / "r.txt", "x,7,3,2.5\n");
  const auto f = LoadRatings(dir / "r.txt", {.user_col = 1, .item_col = 2,
                                             .rating_col = 3});
  ASSERT_EQ(f.records.size(), 1u);
  EXPECT_EQ(f.records[0].user, 7);
  EXPECT_EQ(f.records[0].item, 3);
  EXPECT_DOUBLE_EQ(f.records[0].rating, 2.5);
}

TEST(LoadRatings, ErrorsNameTheLine) {
  TempDir dir;
  WriteFile(dir / "bad.txt", "1 2 5\n1 two 4\n");
  try {
    LoadRatings(dir / "bad.txt");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  WriteFile(dir / "empty.txt", "");
  EXPECT_THROW(LoadRatings(dir / "empty.txt"), InputError);
  EXPECT_THROW(LoadRatings(dir / "missing.txt"), InputError);
}

TEST(LoadTrust, KeepsDirection) {
  TempDir dir;
  WriteFile(dir / "t.txt", "1 2\n2 1\n");
  const auto f = LoadTrust(dir / "t.txt");
  const std::vector<std::pair<RawId, RawId>> want{{1, 2}, {2, 1}};
  EXPECT_EQ(f.edges, want);
}

TEST(LoadTrust, DropsSelfLoopsAndDuplicates) {
  TempDir dir;
  WriteFile(dir / "t.txt", "1 1\n3 4\n3 4\n");
  const auto f = LoadTrust(dir / "t.txt");
  EXPECT_EQ(f.self_loops, 1u);
  EXPECT_EQ(f.duplicates, 1u);
  ASSERT_EQ(f.edges.size(), 1u);
}

TEST(LoadTrust, OnlySelfLoopsIsAnEmptyResult) {
  TempDir dir;
  WriteFile(dir / "t.txt", "1 1\n");
  EXPECT_THROW(LoadTrust(dir / "t.txt"), InputError);
  WriteFile(dir / "bad.txt", "1\n");
  EXPECT_THROW(LoadTrust(dir / "bad.txt"), InputError);
}

TEST(SocialGraph, NeighborsAreDirected) {
  const std::vector<std::pair<UserId, UserId>> edges{{0, 2}, {0, 1}};
  SocialGraph g(3, edges);
  const auto n0 = g.Neighbors(0);
  EXPECT_EQ(std::vector<UserId>(n0.begin(), n0.end()),
            (std::vector<UserId>{1, 2}));
  EXPECT_TRUE(g.Neighbors(1).empty());
  EXPECT_THROW(g.Neighbors(5), InputError);
  const auto f2 = g.Followers(2);
  EXPECT_EQ(std::vector<UserId>(f2.begin(), f2.end()), std::vector<UserId>{0});
}

TEST(SocialGraph, RejectsSelfLoopsAndMergesDuplicates) {
  const std::vector<std::pair<UserId, UserId>> loop{{1, 1}};
  EXPECT_THROW(SocialGraph(2, loop), InputError);
  const std::vector<std::pair<UserId, UserId>> dup{{0, 1}, {0, 1}};
  EXPECT_EQ(SocialGraph(2, dup).num_edges(), 1u);
}

TEST(SocialGraph, WithoutEdgesRemovesOnlyThose) {
  const std::vector<std::pair<UserId, UserId>> edges{{0, 1}, {1, 2}, {2, 0}};
  SocialGraph g(3, edges);
  const std::vector<std::pair<UserId, UserId>> cut{{1, 2}, {0, 2}};
  const auto h = g.WithoutEdges(cut);
  EXPECT_EQ(h.num_edges(), 2u);
  EXPECT_FALSE(h.HasEdge(1, 2));
  EXPECT_TRUE(h.HasEdge(0, 1));
  EXPECT_TRUE(h.HasEdge(2, 0));
}

std::vector<RawRating> DenseBlock(int users, int items) {
  std::vector<RawRating> r;
  for (int u = 0; u < users; ++u)
    for (int i = 0; i < items; ++i) r.push_back({100 + u, 500 + i, 3.0});
  return r;
}

TEST(KCoreFilter, KOneIsIdentity) {
  const std::vector<RawRating> recs{{5, 9, 4}, {7, 9, 2}, {5, 3, 1}};
  const std::vector<std::pair<RawId, RawId>> edges{{5, 7}};
  const auto ds = KCoreFilter(recs, edges, 1);
  EXPECT_EQ(ds.n_users, 2);
  EXPECT_EQ(ds.n_items, 2);
  EXPECT_EQ(ds.interactions.size(), 3u);
  EXPECT_EQ(ds.graph.num_edges(), 1u);
  EXPECT_EQ(ds.user_raw_ids, (std::vector<RawId>{5, 7}));
  EXPECT_EQ(ds.item_raw_ids, (std::vector<RawId>{3, 9}));
}

TEST(KCoreFilter, StarCascadesToEmpty) {
  std::vector<RawRating> recs;
  for (int u = 0; u < 6; ++u) recs.push_back({u, 1, 5});
  EXPECT_THROW(KCoreFilter(recs, {}, 2), InputError);
  EXPECT_THROW(KCoreFilter(recs, {}, 0), InputError);
}

TEST(KCoreFilter, DedupKeepsLastRating) {
  const std::vector<RawRating> recs{{1, 1, 2}, {1, 1, 5}};
  const auto ds = KCoreFilter(recs, {}, 1);
  ASSERT_EQ(ds.interactions.size(), 1u);
  EXPECT_DOUBLE_EQ(ds.interactions[0].rating, 5.0);
}

TEST(KCoreFilter, PrunesEdgesOfDroppedUsers) {
  auto recs = DenseBlock(3, 3);
  recs.push_back({999, 500, 4.0});  // single-rating user
  const std::vector<std::pair<RawId, RawId>> edges{
      {100, 101}, {999, 100}, {100, 999}, {101, 102}};
  const auto ds = KCoreFilter(recs, edges, 2);
  EXPECT_EQ(ds.n_users, 3);
  EXPECT_EQ(ds.graph.num_edges(), 2u);
}

// Independent reference: repeat whole-set removal until nothing changes.
std::set<std::pair<RawId, RawId>> ReferenceCore(
    const std::vector<RawRating>& recs, int k) {
  std::set<std::pair<RawId, RawId>> alive;
  for (const auto& r : recs) alive.insert({r.user, r.item});
  for (bool changed = true; changed;) {
    changed = false;
    std::map<RawId, int> du, di;
    for (const auto& [u, i] : alive) ++du[u], ++di[i];
    for (auto it = alive.begin(); it != alive.end();) {
      if (du[it->first] < k || di[it->second] < k) {
        it = alive.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  return alive;
}

class KCoreProperty : public ::testing::TestWithParam<int> {};

TEST_P(KCoreProperty, MatchesReferenceIdempotentAndMinDegree) {
  const int seed = GetParam();
  std::mt19937_64 rng(seed);
  std::vector<RawRating> recs;
  for (int n = 0; n < 600; ++n) {
    recs.push_back({static_cast<RawId>(rng() % 60),
                    static_cast<RawId>(rng() % 40), 1.0 + rng() % 5});
  }
  std::vector<std::pair<RawId, RawId>> edges;
  for (int n = 0; n < 200; ++n) {
    edges.emplace_back(rng() % 60, rng() % 60);
  }
  const int k = 3 + seed % 5;
  Dataset ds;
  try {
    ds = KCoreFilter(recs, edges, k);
  } catch (const InputError&) {
    EXPECT_TRUE(ReferenceCore(recs, k).empty());
    return;
  }
  const auto ref = ReferenceCore(recs, k);
  std::set<std::pair<RawId, RawId>> got;
  for (const auto& r : ds.interactions) {
    got.insert({ds.user_raw_ids[r.user], ds.item_raw_ids[r.item]});
  }
  EXPECT_EQ(got, ref);

  std::vector<int> du(ds.n_users), di(ds.n_items);
  for (const auto& r : ds.interactions) ++du[r.user], ++di[r.item];
  EXPECT_GE(*std::min_element(du.begin(), du.end()), k);
  EXPECT_GE(*std::min_element(di.begin(), di.end()), k);

  std::size_t total = 0;
  for (UserId u = 0; u < ds.n_users; ++u) {
    const auto nb = ds.graph.Neighbors(u);
    EXPECT_EQ(std::find(nb.begin(), nb.end(), u), nb.end());
    total += nb.size();
  }
  EXPECT_EQ(total, ds.graph.num_edges());

  // Re-filtering the remapped output changes nothing.
  std::vector<RawRating> again;
  for (const auto& r : ds.interactions) {
    again.push_back({ds.user_raw_ids[r.user], ds.item_raw_ids[r.item],
                     r.rating});
  }
  std::vector<std::pair<RawId, RawId>> raw_edges;
  for (const auto& [a, b] : ds.graph.Edges()) {
    raw_edges.emplace_back(ds.user_raw_ids[a], ds.user_raw_ids[b]);
  }
  EXPECT_EQ(KCoreFilter(again, raw_edges, k), ds);
}

INSTANTIATE_TEST_SUITE_P(Seeds, KCoreProperty, ::testing::Range(0, 12));

// Counts influential pairs straight from raw ids with no remapping.
std::size_t RawInfluential(const std::vector<RawRating>& recs,
                           const std::vector<std::pair<RawId, RawId>>& edges) {
  std::set<std::pair<RawId, RawId>> obs;
  for (const auto& r : recs) obs.insert({r.user, r.item});
  std::size_t n = 0;
  for (const auto& [u, i] : obs)
    for (const auto& [a, b] : edges)
      if (a == u && obs.contains({b, i})) ++n;
  return n;
}

TEST(Stats, RemapPreservesCounts) {
  SynthConfig sc;
  sc.n_users = 80;
  sc.n_items = 60;
  sc.ratings_per_user = 12;
  const auto corpus = GenerateCorpus(sc);
  const auto ds = KCoreFilter(corpus.ratings, corpus.trust, 1);
  const auto st = ComputeStats(ds);
  std::set<RawId> users, items;
  std::set<std::pair<RawId, RawId>> pairs;
  for (const auto& r : corpus.ratings) {
    users.insert(r.user);
    items.insert(r.item);
    pairs.insert({r.user, r.item});
  }
  std::vector<std::pair<RawId, RawId>> kept;
  for (const auto& e : corpus.trust)
    if (e.first != e.second && users.contains(e.first) &&
        users.contains(e.second))
      kept.push_back(e);
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  EXPECT_EQ(st.n_users, users.size());
  EXPECT_EQ(st.n_items, items.size());
  EXPECT_EQ(st.n_interactions, pairs.size());
  EXPECT_EQ(st.n_social_edges, kept.size());
  EXPECT_EQ(st.n_influential_pairs, RawInfluential(corpus.ratings, kept));
  EXPECT_NEAR(st.edge_density,
              static_cast<double>(kept.size()) /
                  (static_cast<double>(users.size()) * (users.size() - 1)),
              1e-12);
}

TEST(Stats, EmptyGraphHasNoInfluence) {
  const std::vector<RawRating> recs{{1, 1, 3}, {2, 1, 4}};
  const auto ds = KCoreFilter(recs, {}, 1);
  const auto st = ComputeStats(ds);
  EXPECT_EQ(st.n_social_edges, 0u);
  EXPECT_DOUBLE_EQ(st.edge_density, 0.0);
  EXPECT_EQ(st.n_influential_pairs, 0u);
}

TEST(Stats, ObservedSetOverridesInteractions) {
  const std::vector<RawRating> recs{{1, 1, 3}, {2, 1, 4}, {2, 2, 4}};
  const std::vector<std::pair<RawId, RawId>> edges{{1, 2}};
  const auto ds = KCoreFilter(recs, edges, 1);
  EXPECT_EQ(ComputeStats(ds).n_influential_pairs, 1u);
  const std::vector<std::uint64_t> obs{PackPair(0, 1), PackPair(1, 1)};
  EXPECT_EQ(ComputeStats(ds, obs).n_influential_pairs, 1u);
  const std::vector<std::uint64_t> none{PackPair(0, 0)};
  EXPECT_EQ(ComputeStats(ds, none).n_influential_pairs, 0u);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  const auto ds = KCoreFilter(DenseBlock(4, 3),
                              std::vector<std::pair<RawId, RawId>>{{100, 103}},
                              2);
  SaveDataset(ds, dir / "ds.json");
  EXPECT_EQ(LoadDataset(dir / "ds.json"), ds);
  WriteFile(dir / "junk.json", "{\"format\": \"other\"}");
  EXPECT_THROW(LoadDataset(dir / "junk.json"), InputError);
}

}  // namespace
}  // namespace nirec
