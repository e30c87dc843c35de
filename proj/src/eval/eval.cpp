// SPDX-License-Identifier: Apache-2.0
#include "refl/eval.hpp"

#include <cmath>
#include <cstdio>

#include "refl/error.hpp"
#include "refl/io.hpp"
#include "refl/metrics.hpp"
#include "refl/wavelet.hpp"

namespace refl::eval {

double lmd_proxy(const Image& output, const Image& gt, std::span<const dataset::Landmark> landmarks) {
  require_same_shape(output, gt, "lmd_proxy");
  if (landmarks.empty()) fail(ErrorCode::kInvalidArgument, "lmd_proxy: no landmarks");
  const int half = kLandmarkPatch / 2;
  double patch_sum = 0.0;
  for (const auto& lm : landmarks) {
    const int r0 = static_cast<int>(std::lround(lm.row)), c0 = static_cast<int>(std::lround(lm.col));
    if (r0 < 0 || r0 >= gt.height() || c0 < 0 || c0 >= gt.width())
      fail(ErrorCode::kInvalidArgument, "lmd_proxy: landmark '" + lm.name + "' outside the image");
    double sq = 0.0;
    int count = 0;
    for (int r = std::max(0, r0 - half); r <= std::min(gt.height() - 1, r0 + half); ++r)
      for (int c = std::max(0, c0 - half); c <= std::min(gt.width() - 1, c0 + half); ++c)
        for (int ch = 0; ch < gt.channels(); ++ch) {
          const double d = output.at(r, c, ch) - gt.at(r, c, ch);
          sq += d * d;
          ++count;
        }
    patch_sum += std::sqrt(sq / count);
  }
  return patch_sum / static_cast<double>(landmarks.size()) + wavelet::dwt_lf_loss(output, gt);
}

double lmd_proxy(const Image& output, const dataset::SyntheticFace& gt) {
  return lmd_proxy(output, gt.image, gt.landmarks);
}

void EvalReport::aggregate() {
  mean.fill(0.0);
  stddev.fill(0.0);
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (int k = 0; k < kNumColumns; ++k) mean[k] += r.values[k];
  for (auto& m : mean) m /= n;
  for (const auto& r : rows)
    for (int k = 0; k < kNumColumns; ++k) stddev[k] += (r.values[k] - mean[k]) * (r.values[k] - mean[k]);
  for (auto& s : stddev) s = std::sqrt(s / n);
}

Json EvalReport::to_json() const {
  Json cols = Json::array();
  for (const auto& c : kColumns)
    cols.push_back({{"name", c.name}, {"direction", c.direction == Direction::kHigher ? "higher" : "lower"},
                    {"proxy", c.proxy}});
  Json jr = Json::array();
  for (const auto& r : rows) {
    Json row{{"id", r.id}};
    for (int k = 0; k < kNumColumns; ++k) row[kColumns[k].name] = r.values[k];
    jr.push_back(std::move(row));
  }
  Json agg = Json::object();
  for (int k = 0; k < kNumColumns; ++k) agg[kColumns[k].name] = {{"mean", mean[k]}, {"std", stddev[k]}};
  return Json{{"columns", cols},
              {"rows", jr},
              {"aggregate", agg},
              {"testset_fingerprint", testset_fingerprint},
              {"config", config}};
}

EvalReport EvalReport::from_json(const Json& j) {
  EvalReport rep;
  try {
    for (const auto& row : j.at("rows")) {
      EvalRow r;
      r.id = row.at("id").get<std::string>();
      for (int k = 0; k < kNumColumns; ++k) r.values[k] = row.at(kColumns[k].name).get<double>();
      rep.rows.push_back(std::move(r));
    }
    rep.testset_fingerprint = j.at("testset_fingerprint").get<std::string>();
    rep.config = j.value("config", Json::object());
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed eval report: ") + e.what());
  }
  rep.aggregate();
  return rep;
}

std::string EvalReport::to_csv() const {
  std::string out = "id";
  for (const auto& c : kColumns) out += std::string(",") + c.name;
  out += "\n";
  char buf[40];
  auto line = [&](const std::string& id, const std::array<double, kNumColumns>& v) {
    out += id;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out += buf;
    }
    out += "\n";
  };
  for (const auto& r : rows) line(r.id, r.values);
  line("#mean", mean);
  line("#std", stddev);
  return out;
}

std::string testset_fingerprint(std::span<const TestItem> items) {
  std::uint64_t h = fnv1a("testset");
  for (const auto& it : items) {
    h = fnv1a(it.id, h);
    h = fnv1a(hex64(image_hash(it.hq)), h);
  }
  return hex64(h);
}

EvalReport evaluate_outputs(std::span<const Image> outputs, std::span<const TestItem> items,
                            const reward::RewardModel& frm, const Json& config) {
  if (items.empty()) fail(ErrorCode::kInvalidArgument, "evaluate: empty test set");
  require(outputs.size() == items.size(), "evaluate: one output per test item");
  std::vector<dataset::Attributes> attrs;
  for (const auto& it : items) attrs.push_back(it.attrs);
  const auto reward = frm.score(outputs, attrs);
  EvalReport rep;
  rep.config = config;
  rep.testset_fingerprint = testset_fingerprint(items);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Image& out = outputs[i];
    const Image& gt = items[i].hq;
    rep.rows.push_back({items[i].id,
                        {metrics::ssim(out, gt), metrics::psnr(out, gt), metrics::perceptual_dist(out, gt),
                         lmd_proxy(out, gt, items[i].landmarks), metrics::sharpness(out), metrics::naturalness(out),
                         reward[i]}});
  }
  rep.aggregate();
  return rep;
}

EvalReport evaluate(const restorer::Restorer& r, const reward::RewardModel& frm, std::span<const TestItem> items,
                    std::uint64_t noise_seed, const Json& config) {
  if (items.empty()) fail(ErrorCode::kInvalidArgument, "evaluate: empty test set");
  std::vector<Image> lq;
  for (const auto& it : items) lq.push_back(it.lq);
  const auto out = r.restore(lq, {r.default_steps(), noise_seed, 0});
  return evaluate_outputs(out, items, frm, config);
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  ensure_directory(dir);
  write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_text_file(dir / "report.csv", report.to_csv());
}

EvalReport load_report(const std::filesystem::path& json_path) { return EvalReport::from_json(read_json_file(json_path)); }

std::vector<Delta> compare(const EvalReport& a, const EvalReport& b) {
  if (a.testset_fingerprint != b.testset_fingerprint)
    fail(ErrorCode::kConflict, "compare: reports cover different test sets (" + a.testset_fingerprint + " vs " +
                                   b.testset_fingerprint + ")");
  std::vector<Delta> out;
  for (int k = 0; k < kNumColumns; ++k) {
    const auto& c = kColumns[k];
    const double diff = b.mean[k] - a.mean[k];
    out.push_back({c.name, c.direction, a.mean[k], b.mean[k], c.direction == Direction::kHigher ? diff : -diff});
  }
  return out;
}

Json to_json(const std::vector<Delta>& deltas) {
  Json j = Json::array();
  for (const auto& d : deltas)
    j.push_back({{"metric", d.metric},
                 {"direction", d.direction == Direction::kHigher ? "higher" : "lower"},
                 {"mean_a", d.mean_a},
                 {"mean_b", d.mean_b},
                 {"delta", d.delta}});
  return j;
}

}  // namespace refl::eval
