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

#include "nirec/corpus.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "json.hpp"
#include "json_io.h"

namespace nirec {
namespace {

using Json = nlohmann::json;

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() &&
           (line[pos] == ' ' || line[pos] == '\t' || line[pos] == ',' ||
            line[pos] == '\r')) {
      ++pos;
    }
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' &&
           line[pos] != ',' && line[pos] != '\r') {
      ++pos;
    }
    if (pos > start) out.push_back(line.substr(start, pos - start));
  }
  return out;
}

bool SkipLine(std::string_view line) {
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == '\r') continue;
    return c == '#' || c == '%';
  }
  return true;  // blank
}

template <typename T>
bool ParseNumber(std::string_view field, T& out) {
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool ParseRawId(std::string_view field, RawId& out) {
  if (ParseNumber(field, out)) return true;
  // Some dumps write ids as "12.0".
  double d = 0;
  if (ParseNumber(field, d) && d == std::floor(d) && std::abs(d) < 9e15) {
    out = static_cast<RawId>(d);
    return true;
  }
  return false;
}

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot read file: {}", path.string()));
  return in;
}

}  // namespace

RatingsFile LoadRatings(const std::filesystem::path& path,
                        const ColumnSpec& columns) {
  std::ifstream in = OpenOrThrow(path);
  const int needed =
      std::max({columns.user_col, columns.item_col, columns.rating_col}) + 1;
  RatingsFile result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (SkipLine(line)) continue;
    const auto fields = SplitFields(line);
    RawRating rec;
    if (static_cast<int>(fields.size()) < needed ||
        !ParseRawId(fields[columns.user_col], rec.user) ||
        !ParseRawId(fields[columns.item_col], rec.item) ||
        !ParseNumber(fields[columns.rating_col], rec.rating) ||
        !std::isfinite(rec.rating)) {
      throw InputError(fmt::format("{}:{}: malformed rating line '{}'",
                                   path.string(), line_no, line));
    }
    if (rec.rating < 1.0 || rec.rating > 5.0) {
      rec.rating = std::clamp(rec.rating, 1.0, 5.0);
      ++result.clamped;
    }
    result.records.push_back(rec);
  }
  if (result.records.empty()) {
    throw InputError(fmt::format("no ratings in {}", path.string()));
  }
  return result;
}

TrustFile LoadTrust(const std::filesystem::path& path) {
  std::ifstream in = OpenOrThrow(path);
  TrustFile result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (SkipLine(line)) continue;
    const auto fields = SplitFields(line);
    RawId a = 0, b = 0;
    if (fields.size() < 2 || !ParseRawId(fields[0], a) ||
        !ParseRawId(fields[1], b)) {
      throw InputError(fmt::format("{}:{}: malformed trust line '{}'",
                                   path.string(), line_no, line));
    }
    if (a == b) {
      ++result.self_loops;
      continue;
    }
    result.edges.emplace_back(a, b);
  }
  std::sort(result.edges.begin(), result.edges.end());
  const auto before = result.edges.size();
  result.edges.erase(std::unique(result.edges.begin(), result.edges.end()),
                     result.edges.end());
  result.duplicates = before - result.edges.size();
  if (result.edges.empty()) {
    throw InputError(fmt::format("no trust edges in {}", path.string()));
  }
  return result;
}

SocialGraph::SocialGraph(UserId n_users,
                         std::span<const std::pair<UserId, UserId>> edges)
    : n_users_(n_users) {
  std::vector<std::pair<UserId, UserId>> sorted(edges.begin(), edges.end());
  for (const auto& [a, b] : sorted) {
    if (a < 0 || b < 0 || a >= n_users || b >= n_users) {
      throw InputError(fmt::format("edge ({}, {}) outside {} users", a, b,
                                   n_users));
    }
    if (a == b) throw InputError(fmt::format("self-loop on user {}", a));
  }
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  offsets_.assign(static_cast<std::size_t>(n_users) + 1, 0);
  rev_offsets_.assign(static_cast<std::size_t>(n_users) + 1, 0);
  for (const auto& [a, b] : sorted) {
    ++offsets_[a + 1];
    ++rev_offsets_[b + 1];
  }
  for (std::size_t u = 0; u < static_cast<std::size_t>(n_users); ++u) {
    offsets_[u + 1] += offsets_[u];
    rev_offsets_[u + 1] += rev_offsets_[u];
  }
  targets_.resize(sorted.size());
  rev_targets_.resize(sorted.size());
  std::vector<std::size_t> cursor(rev_offsets_.begin(), rev_offsets_.end() - 1);
  for (std::size_t e = 0; e < sorted.size(); ++e) {
    targets_[e] = sorted[e].second;
    // Sources arrive in ascending order, so follower lists stay sorted.
    rev_targets_[cursor[sorted[e].second]++] = sorted[e].first;
  }
}

std::span<const UserId> SocialGraph::Neighbors(UserId u) const {
  if (u < 0 || u >= n_users_) {
    throw InputError(fmt::format("user {} out of range [0, {})", u, n_users_));
  }
  return {targets_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
}

std::span<const UserId> SocialGraph::Followers(UserId u) const {
  if (u < 0 || u >= n_users_) {
    throw InputError(fmt::format("user {} out of range [0, {})", u, n_users_));
  }
  return {rev_targets_.data() + rev_offsets_[u],
          rev_offsets_[u + 1] - rev_offsets_[u]};
}

bool SocialGraph::HasEdge(UserId from, UserId to) const {
  const auto nbrs = Neighbors(from);
  return std::binary_search(nbrs.begin(), nbrs.end(), to);
}

std::vector<std::pair<UserId, UserId>> SocialGraph::Edges() const {
  std::vector<std::pair<UserId, UserId>> out;
  out.reserve(targets_.size());
  for (UserId u = 0; u < n_users_; ++u) {
    for (UserId v : Neighbors(u)) out.emplace_back(u, v);
  }
  return out;
}

SocialGraph SocialGraph::WithoutEdges(
    std::span<const std::pair<UserId, UserId>> removed) const {
  std::unordered_set<std::uint64_t> drop;
  for (const auto& [a, b] : removed) drop.insert(PackPair(a, b));
  std::vector<std::pair<UserId, UserId>> kept;
  for (const auto& e : Edges()) {
    if (!drop.contains(PackPair(e.first, e.second))) kept.push_back(e);
  }
  return SocialGraph(n_users_, kept);
}

Dataset KCoreFilter(std::span<const RawRating> records,
                    std::span<const std::pair<RawId, RawId>> edges, int k) {
  if (k < 1) throw InputError(fmt::format("k-core requires k >= 1, got {}", k));

  // Keep the last occurrence of each (user, item).
  std::map<std::pair<RawId, RawId>, double> last;
  for (const auto& r : records) last[{r.user, r.item}] = r.rating;

  std::map<RawId, std::size_t> user_deg, item_deg;
  std::vector<std::pair<std::pair<RawId, RawId>, double>> alive(last.begin(),
                                                                last.end());
  while (true) {
    user_deg.clear();
    item_deg.clear();
    for (const auto& [key, _] : alive) {
      ++user_deg[key.first];
      ++item_deg[key.second];
    }
    const auto kk = static_cast<std::size_t>(k);
    const auto before = alive.size();
    std::erase_if(alive, [&](const auto& entry) {
      return user_deg[entry.first.first] < kk ||
             item_deg[entry.first.second] < kk;
    });
    if (alive.size() == before) break;
  }
  if (alive.empty()) {
    throw InputError(fmt::format("{}-core filtering removed every rating", k));
  }

  Dataset ds;
  std::unordered_map<RawId, UserId> user_map;
  std::unordered_map<RawId, ItemId> item_map;
  for (const auto& [raw, _] : user_deg) {  // std::map: ascending raw id
    user_map[raw] = static_cast<UserId>(ds.user_raw_ids.size());
    ds.user_raw_ids.push_back(raw);
  }
  for (const auto& [raw, _] : item_deg) {
    item_map[raw] = static_cast<ItemId>(ds.item_raw_ids.size());
    ds.item_raw_ids.push_back(raw);
  }
  ds.n_users = static_cast<UserId>(ds.user_raw_ids.size());
  ds.n_items = static_cast<ItemId>(ds.item_raw_ids.size());
  ds.interactions.reserve(alive.size());
  for (const auto& [key, rating] : alive) {
    ds.interactions.push_back(
        {user_map.at(key.first), item_map.at(key.second), rating});
  }
  std::sort(ds.interactions.begin(), ds.interactions.end(),
            [](const auto& a, const auto& b) {
              return std::tie(a.user, a.item) < std::tie(b.user, b.item);
            });

  std::vector<std::pair<UserId, UserId>> dense_edges;
  for (const auto& [a, b] : edges) {
    if (a == b) continue;
    auto ia = user_map.find(a);
    auto ib = user_map.find(b);
    if (ia == user_map.end() || ib == user_map.end()) continue;
    dense_edges.emplace_back(ia->second, ib->second);
  }
  ds.graph = SocialGraph(ds.n_users, dense_edges);
  return ds;
}

std::size_t CountInfluentialPairs(const SocialGraph& graph,
                                  std::span<const std::uint64_t> observed) {
  std::unordered_set<std::uint64_t> set(observed.begin(), observed.end());
  std::size_t count = 0;
  for (std::uint64_t key : set) {
    const auto u = static_cast<UserId>(key >> 32);
    const auto i = static_cast<ItemId>(key & 0xffffffffu);
    for (UserId v : graph.Neighbors(u)) {
      if (set.contains(PackPair(v, i))) ++count;
    }
  }
  return count;
}

DatasetStats ComputeStats(const Dataset& dataset,
                          std::optional<std::span<const std::uint64_t>> observed) {
  DatasetStats s;
  s.n_users = static_cast<std::size_t>(dataset.n_users);
  s.n_items = static_cast<std::size_t>(dataset.n_items);
  s.n_interactions = dataset.interactions.size();
  s.n_social_edges = dataset.graph.num_edges();
  const double n = static_cast<double>(s.n_users);
  s.edge_density =
      s.n_users > 1 ? static_cast<double>(s.n_social_edges) / (n * (n - 1)) : 0.0;
  if (observed) {
    s.n_influential_pairs = CountInfluentialPairs(dataset.graph, *observed);
  } else {
    std::vector<std::uint64_t> keys;
    keys.reserve(dataset.interactions.size());
    for (const auto& r : dataset.interactions) {
      keys.push_back(PackPair(r.user, r.item));
    }
    s.n_influential_pairs = CountInfluentialPairs(dataset.graph, keys);
  }
  return s;
}

void SaveDataset(const Dataset& dataset, const std::filesystem::path& path) {
  Json j;
  j["n_users"] = dataset.n_users;
  j["n_items"] = dataset.n_items;
  j["user_raw_ids"] = dataset.user_raw_ids;
  j["item_raw_ids"] = dataset.item_raw_ids;
  Json recs = Json::array();
  for (const auto& r : dataset.interactions) {
    recs.push_back(Json::array({r.user, r.item, r.rating}));
  }
  j["interactions"] = std::move(recs);
  Json edges = Json::array();
  for (const auto& [a, b] : dataset.graph.Edges()) {
    edges.push_back(Json::array({a, b}));
  }
  j["edges"] = std::move(edges);
  WriteArtifact(path, "dataset", j);
}

Dataset LoadDataset(const std::filesystem::path& path) {
  const Json j = ReadArtifact(path, "dataset");
  Dataset ds;
  try {
    ds.n_users = j.at("n_users").get<UserId>();
    ds.n_items = j.at("n_items").get<ItemId>();
    ds.user_raw_ids = j.at("user_raw_ids").get<std::vector<RawId>>();
    ds.item_raw_ids = j.at("item_raw_ids").get<std::vector<RawId>>();
    for (const auto& r : j.at("interactions")) {
      InteractionRecord rec{r.at(0).get<UserId>(), r.at(1).get<ItemId>(),
                            r.at(2).get<double>()};
      if (rec.user < 0 || rec.user >= ds.n_users || rec.item < 0 ||
          rec.item >= ds.n_items) {
        throw InputError("interaction id out of range");
      }
      ds.interactions.push_back(rec);
    }
    std::vector<std::pair<UserId, UserId>> edges;
    for (const auto& e : j.at("edges")) {
      edges.emplace_back(e.at(0).get<UserId>(), e.at(1).get<UserId>());
    }
    ds.graph = SocialGraph(ds.n_users, edges);
  } catch (const Json::exception& e) {
    throw InputError(fmt::format("{}: bad dataset artifact: {}", path.string(),
                                 e.what()));
  }
  return ds;
}

}  // namespace nirec
