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

// Versioned JSON containers shared by every persisted artifact.

#ifndef NIREC_SRC_JSON_IO_H_
#define NIREC_SRC_JSON_IO_H_

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace nirec {

inline constexpr int kArtifactVersion = 1;

// Writes {"format": "nirec/<kind>", "version": 1, ...body} with stable key
// order and a trailing newline. Doubles are emitted in shortest round-trip
// form, so a write/read cycle is bit-exact.
void WriteArtifact(const std::filesystem::path& path, std::string_view kind,
                   const nlohmann::json& body);

// Parses and checks the header; throws InputError on mismatch.
nlohmann::json ReadArtifact(const std::filesystem::path& path,
                            std::string_view kind);

void WriteTextFile(const std::filesystem::path& path, std::string_view text);
std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace nirec

#endif  // NIREC_SRC_JSON_IO_H_
