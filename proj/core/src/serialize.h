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

// JSON encoders for the numeric types shared by checkpoints.

#ifndef NIREC_SRC_SERIALIZE_H_
#define NIREC_SRC_SERIALIZE_H_

#include <string_view>

#include "json.hpp"
#include "nirec/backbones.h"

namespace nirec {

nlohmann::json MatrixToJson(const Matrix& m);
Matrix MatrixFromJson(const nlohmann::json& j, std::string_view what);

nlohmann::json VectorToJson(const Vector& v);
Vector VectorFromJson(const nlohmann::json& j, std::string_view what);

nlohmann::json EmbeddingsToJson(const EmbeddingTable& t);
EmbeddingTable EmbeddingsFromJson(const nlohmann::json& j);

nlohmann::json TrainConfigToJson(const TrainConfig& c);
TrainConfig TrainConfigFromJson(const nlohmann::json& j,
                                const TrainConfig& defaults = {});

}  // namespace nirec

#endif  // NIREC_SRC_SERIALIZE_H_
