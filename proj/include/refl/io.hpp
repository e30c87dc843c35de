// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "refl/nn/tensor.hpp"

namespace refl {

using Json = nlohmann::ordered_json;

// Versioned archive of named parameter arrays plus JSON metadata.
//
// Layout: "REFLARC1" | u32 format version | u64 header length | header JSON
// {"metadata": {...}, "arrays": [{"name", "shape", "offset"}]} | float64 LE payload.
struct Archive {
  Json metadata = Json::object();
  std::vector<std::pair<std::string, nn::Tensor>> arrays;

  const nn::Tensor& array(const std::string& name) const;
};

inline constexpr std::uint32_t kArchiveFormatVersion = 1;

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

void ensure_directory(const std::filesystem::path& dir);
// Writes via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);
Json read_json_file(const std::filesystem::path& path);

// Hex digest helpers used for fingerprints.
std::string hex64(std::uint64_t v);
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace refl
