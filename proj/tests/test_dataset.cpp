// SPDX-License-Identifier: Apache-2.0
#include <set>

#include "doctest.h"
#include "refl/dataset.hpp"
#include "refl/error.hpp"
#include "support.hpp"

using namespace refl;
using namespace refl::dataset;

TEST_CASE("face_synth is deterministic in seed and attributes") {
  const auto a = face_synth(0, {});
  const auto b = face_synth(0, {});
  CHECK(a.image == b.image);
}

TEST_CASE("different seeds give visibly different faces") {
  const auto a = face_synth(0, {});
  const auto b = face_synth(1, {});
  CHECK(max_abs_diff(a.image, b.image) > 0.01);
}

TEST_CASE("pixels lie in the unit interval and landmarks inside the head") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 100);
    const auto f = face_synth(seed, sample_attributes(rng));
    for (double v : f.image.pixels()) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
    REQUIRE(f.landmarks.size() == 3);
    for (const auto& l : f.landmarks) {
      CHECK(l.row >= 0.0);
      CHECK(l.row < f.image.height());
      CHECK(l.col >= 0.0);
      CHECK(l.col < f.image.width());
      // Ellipse membership recomputed from the generator parameters.
      const auto& g = f.geometry;
      const double u = (l.row - g.cy) / g.ry, v = (l.col - g.cx) / g.rx;
      CHECK(u * u + v * v < 1.0);
    }
  }
}

TEST_CASE("out-of-range attributes are rejected") {
  CHECK_THROWS_AS(face_synth(0, Attributes{5, 0, 0, 0}), Error);
  CHECK_THROWS_AS(face_synth(0, Attributes{0, 2, 0, 0}), Error);
  CHECK_THROWS_AS(face_synth(0, Attributes{0, 0, -1, 0}), Error);
  CHECK_THROWS_AS(face_synth(0, Attributes{0, 0, 0, 3}), Error);
}

TEST_CASE("flipping one attribute only changes its documented region") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Attributes base = sample_attributes(rng);
    const auto ref = face_synth(seed, base);
    for (int k = 0; k < kNumAttributes; ++k) {
      auto values = attribute_values(base);
      values[k] = (values[k] + 1) % kAttributeCardinality[k];
      const auto flipped = face_synth(seed, attributes_from_values(values));
      const auto mask = attribute_region(ref.geometry, k);
      bool changed_inside = false;
      for (int r = 0; r < ref.image.height(); ++r)
        for (int c = 0; c < ref.image.width(); ++c)
          for (int ch = 0; ch < 3; ++ch) {
            const double d = std::abs(ref.image.at(r, c, ch) - flipped.image.at(r, c, ch));
            if (mask[static_cast<std::size_t>(r) * ref.image.width() + c])
              changed_inside = changed_inside || d > 0.0;
            else
              REQUIRE(d == 0.0);
          }
      CHECK(changed_inside);
    }
  }
}

TEST_CASE("build_manifest splits exactly and writes every image") {
  const auto dir = refl::testing::scratch_dir("manifest");
  const auto m = build_manifest(10, 42, {0.8, 0.1, 0.1}, dir);
  CHECK(m.split("train").size() == 8);
  CHECK(m.split("val").size() == 1);
  CHECK(m.split("test").size() == 1);
  std::set<std::string> ids;
  for (const auto& r : m.records) {
    CHECK(ids.insert(r.id).second);
    CHECK(std::filesystem::exists(m.resolve(r.image_path)));
  }
  const auto loaded = load_manifest(dir / "manifest.jsonl");
  REQUIRE(loaded.records.size() == 10);
  CHECK(to_json(loaded.records[3]) == to_json(m.records[3]));
}

TEST_CASE("manifest records carry exactly the documented fields") {
  const auto dir = refl::testing::scratch_dir("manifest_fields");
  build_manifest(2, 1, {1.0, 0.0, 0.0}, dir);
  for (const auto& j : read_jsonl(dir / "manifest.jsonl")) {
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    CHECK(keys == std::set<std::string>{"id", "image_path", "attrs", "landmarks", "split"});
  }
}

TEST_CASE("empty manifest is allowed") {
  const auto dir = refl::testing::scratch_dir("manifest_empty");
  const auto m = build_manifest(0, 42, {0.8, 0.1, 0.1}, dir);
  CHECK(m.records.empty());
  CHECK(std::filesystem::exists(dir / "manifest.jsonl"));
  CHECK(load_manifest(dir / "manifest.jsonl").records.empty());
}

TEST_CASE("fixed seed reproduces the manifest byte for byte") {
  const auto d1 = refl::testing::scratch_dir("manifest_a"), d2 = refl::testing::scratch_dir("manifest_b");
  build_manifest(12, 9, {0.5, 0.25, 0.25}, d1);
  build_manifest(12, 9, {0.5, 0.25, 0.25}, d2);
  CHECK(read_text_file(d1 / "manifest.jsonl") == read_text_file(d2 / "manifest.jsonl"));
  CHECK(file_hash(d1 / "images/face_00007.png") == file_hash(d2 / "images/face_00007.png"));
}

TEST_CASE("invalid fractions are rejected") {
  const auto dir = refl::testing::scratch_dir("manifest_bad");
  CHECK_THROWS_AS(build_manifest(4, 0, {0.5, 0.5, 0.5}, dir), Error);
  CHECK_THROWS_AS(build_manifest(4, 0, {-0.1, 0.6, 0.5}, dir), Error);
}
