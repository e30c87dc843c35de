// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "refl/dataset.hpp"
#include "refl/error.hpp"

namespace refl::dataset {

namespace fs = std::filesystem;

std::vector<const ManifestRecord*> Manifest::split(const std::string& name) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

const ManifestRecord& Manifest::find(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  fail(ErrorCode::kNotFound, "manifest has no record " + id);
}

Json to_json(const ManifestRecord& r) {
  Json j = Json::object();
  j["id"] = r.id;
  j["image_path"] = r.image_path;
  j["attrs"] = to_json(r.attrs);
  j["landmarks"] = Json::array();
  for (const auto& l : r.landmarks) j["landmarks"].push_back({{"name", l.name}, {"row", l.row}, {"col", l.col}});
  j["split"] = r.split;
  return j;
}

ManifestRecord record_from_json(const Json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.attrs = attributes_from_json(j.at("attrs"));
  for (const auto& l : j.at("landmarks"))
    r.landmarks.push_back({l.at("name").get<std::string>(), l.at("row").get<double>(), l.at("col").get<double>()});
  r.split = j.at("split").get<std::string>();
  if (r.split != "train" && r.split != "val" && r.split != "test")
    fail(ErrorCode::kInvalidArgument, "record " + r.id + " has unknown split " + r.split);
  return r;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  std::vector<Json> lines;
  lines.reserve(m.records.size());
  for (const auto& r : m.records) lines.push_back(to_json(r));
  write_jsonl(path, lines);
}

Manifest load_manifest(const fs::path& path) {
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> ids;
  for (const auto& j : read_jsonl(path)) {
    m.records.push_back(record_from_json(j));
    if (!ids.insert(m.records.back().id).second)
      fail(ErrorCode::kInvalidArgument, "duplicate manifest id " + m.records.back().id);
  }
  return m;
}

Manifest build_manifest(int count, std::uint64_t seed, SplitFractions f, const fs::path& out_dir, int size) {
  require(count >= 0, "count must be nonnegative");
  require(f.train >= 0 && f.val >= 0 && f.test >= 0, "split fractions must be nonnegative");
  require(std::abs(f.train + f.val + f.test - 1.0) <= 1e-9, "split fractions must sum to 1");

  ensure_directory(out_dir / "images");
  Manifest m;
  m.root = out_dir;

  const int n_train = std::min<int>(count, static_cast<int>(std::llround(count * f.train)));
  const int n_val = std::min<int>(count - n_train, static_cast<int>(std::llround(count * f.val)));
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(Rng::derive(seed, 0x5917));
  for (int i = count - 1; i > 0; --i) std::swap(order[i], order[shuffle.uniform_int(0, i)]);
  std::vector<std::string> split(count);
  for (int k = 0; k < count; ++k) split[order[k]] = k < n_train ? "train" : (k < n_train + n_val ? "val" : "test");

  for (int i = 0; i < count; ++i) {
    const std::uint64_t item = Rng::derive(seed, static_cast<std::uint64_t>(i));
    Rng attr_rng(Rng::derive(item, 0xA77));
    const Attributes attrs = sample_attributes(attr_rng);
    const SyntheticFace face = face_synth(item, attrs, size);
    char id[32];
    std::snprintf(id, sizeof id, "face_%05d", i);
    ManifestRecord r;
    r.id = id;
    r.image_path = std::string("images/") + id + ".png";
    r.attrs = attrs;
    r.landmarks = face.landmarks;
    r.split = split[i];
    save_png(face.image, out_dir / r.image_path);
    m.records.push_back(std::move(r));
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace refl::dataset
