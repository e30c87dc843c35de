// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "refl/dataset.hpp"
#include "refl/degradation.hpp"
#include "refl/error.hpp"
#include "refl/eval.hpp"
#include "refl/metrics.hpp"
#include "support.hpp"

using namespace refl;
using namespace refl::eval;

namespace {

std::vector<TestItem> items(int n, int size, std::uint64_t seed) {
  std::vector<TestItem> out;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t item = Rng::derive(seed, i);
    Rng rng(item);
    const auto attrs = dataset::sample_attributes(rng);
    const auto face = dataset::face_synth(item, attrs, size);
    out.push_back({"face_" + std::to_string(i), face.image,
                   degradation::degrade(face.image, degradation::sample_degradation_params(rng), rng), attrs,
                   face.landmarks});
  }
  return out;
}

Image shift_cols(const Image& img, int dx) {
  Image out(img.height(), img.width(), img.channels());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c)
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = img.at(r, std::clamp(c - dx, 0, img.width() - 1), ch);
  return out;
}

int column_index(const char* name) {
  for (int k = 0; k < kNumColumns; ++k)
    if (std::string(kColumns[k].name) == name) return k;
  return -1;
}

}  // namespace

TEST_CASE("lmd proxy reference points") {
  const auto face = dataset::face_synth(77, {}, 64);
  REQUIRE(face.landmarks.size() == 3);
  CHECK(lmd_proxy(face.image, face) == 0.0);
  CHECK(lmd_proxy(shift_cols(face.image, 2), face) > 0.0);

  // A uniform offset d gives patch RMS d and an LL difference of 2d per coefficient.
  Image brighter = face.image;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      for (int ch = 0; ch < 3; ++ch) brighter.at(r, c, ch) += 0.01;
  CHECK(lmd_proxy(brighter, face) == doctest::Approx(0.03).epsilon(1e-12));
}

TEST_CASE("lmd proxy ignores high-frequency detail away from the landmarks") {
  const auto face = dataset::face_synth(78, {}, 64);
  // Haar HH kernel on the aligned 2x2 blocks of the top-left 4x4 corner.
  for (const auto& lm : face.landmarks) CHECK(lm.row - kLandmarkPatch / 2 > 4);
  Image out = face.image;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) += ((r + c) % 2 == 0 ? 0.05 : -0.05);
  CHECK(std::abs(lmd_proxy(out, face)) < 1e-12);
}

TEST_CASE("lmd proxy rejects bad landmarks") {
  const auto face = dataset::face_synth(79, {}, 32);
  CHECK_THROWS_AS(lmd_proxy(face.image, face.image, {}), Error);
  const std::vector<dataset::Landmark> outside{{"left_eye", 40.0, 3.0}};
  CHECK_THROWS_AS(lmd_proxy(face.image, face.image, outside), Error);
  CHECK_THROWS_AS(lmd_proxy(Image(16, 16), face.image, face.landmarks), Error);
}

TEST_CASE("ground truth against itself") {
  reward::RewardModel frm;
  const auto test = items(4, 32, 3);
  std::vector<Image> gt;
  for (const auto& t : test) gt.push_back(t.hq);
  const auto rep = evaluate_outputs(gt, test, frm);
  REQUIRE(rep.rows.size() == 4);
  for (const auto& row : rep.rows) {
    CHECK(row.values[column_index("ssim")] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.values[column_index("psnr")] == metrics::kPsnrCap);
    CHECK(row.values[column_index("lmd_proxy")] == 0.0);
    CHECK(row.values[column_index("perceptual_dist")] == 0.0);
  }
  CHECK(rep.rows[2].id == "face_2");
  CHECK(rep.rows[1].values[column_index("face_reward")] ==
        doctest::Approx(frm.score(test[1].hq, test[1].attrs)).epsilon(1e-12));
}

TEST_CASE("aggregates are recomputable from rows") {
  reward::RewardModel frm;
  const auto test = items(5, 32, 4);
  std::vector<Image> lq;
  for (const auto& t : test) lq.push_back(t.lq);
  const auto rep = evaluate_outputs(lq, test, frm, Json{{"run", "unit"}});
  for (int k = 0; k < kNumColumns; ++k) {
    double m = 0.0, v = 0.0;
    for (const auto& r : rep.rows) m += r.values[k] / 5.0;
    for (const auto& r : rep.rows) v += (r.values[k] - m) * (r.values[k] - m) / 5.0;
    CHECK(rep.mean[k] == doctest::Approx(m).epsilon(1e-12));
    CHECK(rep.stddev[k] == doctest::Approx(std::sqrt(v)).epsilon(1e-9));
  }
  const auto back = EvalReport::from_json(rep.to_json());
  CHECK(back.to_json() == rep.to_json());
  CHECK(back.config["run"] == "unit");

  const auto dir = testing::scratch_dir("eval_report");
  write_report(rep, dir);
  CHECK(std::filesystem::exists(dir / "report.csv"));
  CHECK(load_report(dir / "report.json").to_json() == rep.to_json());
  const std::string csv = read_text_file(dir / "report.csv");
  CHECK(csv.rfind("id,ssim,psnr,perceptual_dist,lmd_proxy,sharpness,naturalness,face_reward\n", 0) == 0);

  const auto json = rep.to_json();
  for (const auto& c : json["columns"]) CHECK(c.contains("direction"));
  CHECK(json["columns"][column_index("lmd_proxy")]["proxy"] == true);
}

TEST_CASE("evaluate is deterministic") {
  reward::RewardModel frm;
  restorer::RestorerConfig cfg;
  cfg.ae_width = 8;
  cfg.unet_width = 8;
  cfg.time_dim = 8;
  const restorer::Restorer r(cfg);
  const auto test = items(3, 32, 5);
  const auto a = evaluate(r, frm, test, 11);
  const auto b = evaluate(r, frm, test, 11);
  CHECK(a.rows.size() == test.size());
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.to_csv() == b.to_csv());
  CHECK_THROWS_AS(evaluate(r, frm, std::span<const TestItem>(), 11), Error);
}

TEST_CASE("compare follows metric directions") {
  reward::RewardModel frm;
  const auto test = items(3, 32, 6);
  std::vector<Image> lq, gt;
  for (const auto& t : test) {
    lq.push_back(t.lq);
    gt.push_back(t.hq);
  }
  const auto worse = evaluate_outputs(lq, test, frm);
  const auto best = evaluate_outputs(gt, test, frm);

  for (const auto& d : compare(worse, worse)) CHECK(d.delta == 0.0);

  const auto deltas = compare(worse, best);
  REQUIRE(deltas.size() == kNumColumns);
  for (int k = 0; k < kNumColumns; ++k) {
    const double diff = best.mean[k] - worse.mean[k];
    CHECK(std::abs(deltas[k].delta - (kColumns[k].direction == Direction::kHigher ? diff : -diff)) < 1e-12);
  }
  // Lower lmd in b reads as an improvement.
  CHECK(best.mean[column_index("lmd_proxy")] < worse.mean[column_index("lmd_proxy")]);
  CHECK(deltas[column_index("lmd_proxy")].delta > 0.0);
  CHECK(deltas[column_index("ssim")].delta > 0.0);
  CHECK(to_json(deltas).size() == kNumColumns);

  const auto other = evaluate_outputs(std::span<const Image>(lq).first(2), std::span<const TestItem>(test).first(2), frm);
  try {
    compare(worse, other);
    FAIL("expected a fingerprint mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConflict);
  }
}
