// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refl/image.hpp"
#include "refl/io.hpp"
#include "refl/rng.hpp"

namespace refl::dataset {

// Discrete condition tags. Each face carries one value per dimension.
struct Attributes {
  int skin_tone = 2;   // 0..4
  int glasses = 0;     // 0..1
  int hair = 1;        // 0..3, 0 = none
  int expression = 0;  // 0 neutral, 1 smile, 2 open

  bool operator==(const Attributes&) const = default;
};

inline constexpr int kNumAttributes = 4;
inline constexpr std::array<int, kNumAttributes> kAttributeCardinality = {5, 2, 4, 3};
inline constexpr std::array<const char*, kNumAttributes> kAttributeNames = {"skin_tone", "glasses", "hair",
                                                                              "expression"};

std::array<int, kNumAttributes> attribute_values(const Attributes& a);
Attributes attributes_from_values(const std::array<int, kNumAttributes>& v);
void validate(const Attributes& a);
Json to_json(const Attributes& a);
Attributes attributes_from_json(const Json& j);
Attributes sample_attributes(Rng& rng);

struct Landmark {
  std::string name;
  double row = 0.0;
  double col = 0.0;
};

// Seed-determined layout. Attributes never move geometry, so flipping a tag
// only repaints its own region.
struct FaceGeometry {
  int size = 64;
  double cy = 0, cx = 0;  // head centre
  double ry = 0, rx = 0;  // head semi-axes
  double eye_row = 0, eye_dx = 0, eye_ry = 0, eye_rx = 0;
  double mouth_row = 0, mouth_half_width = 0;
  double hair_line = 0;  // hair is painted above this row

  bool inside_head(double row, double col) const;
};

FaceGeometry face_geometry(std::uint64_t seed, int size = 64);

struct SyntheticFace {
  Image image;
  std::vector<Landmark> landmarks;  // left_eye, right_eye, mouth
  Attributes attrs;
  std::uint64_t seed = 0;
  FaceGeometry geometry;
};

SyntheticFace face_synth(std::uint64_t seed, const Attributes& attrs, int size = 64);

// Pixels that attribute `index` (order of kAttributeNames) may touch.
std::vector<std::uint8_t> attribute_region(const FaceGeometry& g, int index);

struct ManifestRecord {
  std::string id;
  std::string image_path;  // relative to the manifest's directory
  Attributes attrs;
  std::vector<Landmark> landmarks;
  std::string split;  // train | val | test
};

struct Manifest {
  std::filesystem::path root;  // directory holding manifest.jsonl
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  std::vector<const ManifestRecord*> split(const std::string& name) const;
  const ManifestRecord& find(const std::string& id) const;
};

struct SplitFractions {
  double train = 0.8, val = 0.1, test = 0.1;
};

// Renders `count` faces into out_dir/images and writes out_dir/manifest.jsonl.
Manifest build_manifest(int count, std::uint64_t seed, SplitFractions fractions, const std::filesystem::path& out_dir,
                        int size = 64);

Json to_json(const ManifestRecord& r);
ManifestRecord record_from_json(const Json& j);
void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace refl::dataset
