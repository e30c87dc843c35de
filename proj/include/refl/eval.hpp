// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "refl/dataset.hpp"
#include "refl/restorer.hpp"
#include "refl/reward_model.hpp"

namespace refl::eval {

inline constexpr int kLandmarkPatch = 9;

enum class Direction { kHigher, kLower };

struct Column {
  const char* name;
  Direction direction;
  bool proxy;  // desk-scale stand-in, not comparable to published numbers
};

inline constexpr int kNumColumns = 7;
inline constexpr std::array<Column, kNumColumns> kColumns = {{
    {"ssim", Direction::kHigher, false},
    {"psnr", Direction::kHigher, false},
    {"perceptual_dist", Direction::kLower, true},
    {"lmd_proxy", Direction::kLower, true},
    {"sharpness", Direction::kHigher, true},
    {"naturalness", Direction::kHigher, true},
    {"face_reward", Direction::kHigher, false},
}};

// Mean RMS difference of 9x9 patches centred on each landmark, plus the mean
// absolute LL-band difference of the whole image. Patches are clipped at the border.
double lmd_proxy(const Image& output, const Image& gt, std::span<const dataset::Landmark> landmarks);
double lmd_proxy(const Image& output, const dataset::SyntheticFace& gt);

struct TestItem {
  std::string id;
  Image hq;
  Image lq;
  dataset::Attributes attrs;
  std::vector<dataset::Landmark> landmarks;
};

struct EvalRow {
  std::string id;
  std::array<double, kNumColumns> values{};
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::array<double, kNumColumns> mean{};
  std::array<double, kNumColumns> stddev{};  // population standard deviation
  std::string testset_fingerprint;
  Json config;  // whatever produced the outputs; copied verbatim

  Json to_json() const;
  static EvalReport from_json(const Json& j);
  std::string to_csv() const;
  // Recomputes mean and stddev from rows.
  void aggregate();
};

// Hash of the ids and ground-truth pixels, in order.
std::string testset_fingerprint(std::span<const TestItem> items);

// Scores ready-made outputs against the test items.
EvalReport evaluate_outputs(std::span<const Image> outputs, std::span<const TestItem> items,
                            const reward::RewardModel& frm, const Json& config = Json::object());
// Restores every LQ input with the mode's default step count and scores the results.
EvalReport evaluate(const restorer::Restorer& r, const reward::RewardModel& frm, std::span<const TestItem> items,
                    std::uint64_t noise_seed, const Json& config = Json::object());

// Writes report.json and report.csv into dir.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
EvalReport load_report(const std::filesystem::path& json_path);

struct Delta {
  std::string metric;
  Direction direction;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double delta = 0.0;  // positive when b is better
};

std::vector<Delta> compare(const EvalReport& a, const EvalReport& b);
Json to_json(const std::vector<Delta>& deltas);

}  // namespace refl::eval
