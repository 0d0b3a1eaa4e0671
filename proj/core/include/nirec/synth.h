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

#ifndef NIREC_SYNTH_H_
#define NIREC_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "nirec/corpus.h"

namespace nirec {

// Desk-scale stand-in for a rating + trust corpus. Users belong to taste
// communities; trust edges mostly stay inside a community, and ratings
// follow community-level latent factors, so the social graph carries signal
// about preferences.
struct SynthConfig {
  int n_users = 600;
  int n_items = 800;
  int n_communities = 8;
  int latent_dim = 4;
  double mean_out_degree = 6.0;
  double homophily = 0.8;        // chance a trust edge stays in-community
  double ratings_per_user = 40.0;
  double taste_noise = 0.5;      // user spread around the community centre
  double rating_noise = 0.6;
  double popularity_skew = 1.0;  // Zipf-like exponent of item exposure
  std::uint64_t seed = 17;
  RawId user_id_offset = 1000;   // raw ids are shifted so remapping matters
  RawId item_id_offset = 50000;
  void Validate() const;
};

struct SynthCorpus {
  std::vector<RawRating> ratings;
  std::vector<std::pair<RawId, RawId>> trust;
};

SynthCorpus GenerateCorpus(const SynthConfig& config);

// Writes "<user> <item> <rating>" and "<truster> <trustee>" text files.
void WriteCorpus(const SynthCorpus& corpus,
                 const std::filesystem::path& ratings_path,
                 const std::filesystem::path& trust_path);

}  // namespace nirec

#endif  // NIREC_SYNTH_H_
