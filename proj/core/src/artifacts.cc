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

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "json_io.h"
#include "nirec/checksum.h"
#include "nirec/common.h"

namespace nirec {

void WriteArtifact(const std::filesystem::path& path, std::string_view kind,
                   const nlohmann::json& body) {
  nlohmann::json doc = body;
  doc["format"] = fmt::format("nirec/{}", kind);
  doc["version"] = kArtifactVersion;
  WriteTextFile(path, doc.dump() + "\n");
}

nlohmann::json ReadArtifact(const std::filesystem::path& path,
                            std::string_view kind) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(fmt::format("{}: not valid JSON: {}", path.string(),
                                 e.what()));
  }
  const std::string expected = fmt::format("nirec/{}", kind);
  if (!doc.is_object() || doc.value("format", "") != expected) {
    throw InputError(fmt::format("{}: expected a {} artifact", path.string(),
                                 expected));
  }
  if (doc.value("version", -1) != kArtifactVersion) {
    throw InputError(fmt::format("{}: unsupported {} version", path.string(),
                                 expected));
  }
  return doc;
}

void WriteTextFile(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  // Write-then-rename so an interrupted run never leaves a torn artifact.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw InputError(fmt::format("cannot write file: {}", path.string()));
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
      throw InputError(fmt::format("write failed: {}", path.string()));
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read file: {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Sha256Hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string Sha256File(const std::filesystem::path& path) {
  return Sha256Hex(ReadTextFile(path));
}

}  // namespace nirec
