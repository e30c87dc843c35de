// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "refl/annotation.hpp"
#include "refl/error.hpp"
#include "support.hpp"

using namespace refl;
using namespace refl::annotation;

namespace {

// Separable set: label = sign(f[0] - f[6]), points within 0.1 of the boundary dropped.
void separable_set(int n, std::uint64_t seed, std::vector<std::vector<double>>& x, std::vector<int>& y) {
  Rng rng(seed);
  while (static_cast<int>(x.size()) < n) {
    std::vector<double> f(kFeatureDim);
    for (auto& v : f) v = rng.uniform(-1.0, 1.0);
    const double m = f[0] - f[6];
    if (std::abs(m) < 0.1) continue;
    x.push_back(f);
    y.push_back(m > 0 ? 1 : -1);
  }
}

std::vector<CandidateSet> candidate_sets(int faces, int k) {
  std::vector<CandidateSet> sets;
  for (int i = 0; i < faces; ++i) {
    CandidateSet s;
    s.face_id = "face_" + std::to_string(i);
    s.gt_path = "hq/" + s.face_id + ".png";
    for (int v = 0; v < k; ++v) s.variant_paths.push_back("var" + std::to_string(v) + "/" + s.face_id + ".png");
    sets.push_back(s);
  }
  return sets;
}

// Features whose perceptual-distance slots make "a" better for even pair index.
std::vector<PreferencePair> featured_pairs(int faces, int k, std::uint64_t seed) {
  auto pairs = enumerate_pairs(candidate_sets(faces, k));
  Rng rng(seed);
  for (auto& p : pairs) {
    FeatureVector f{};
    for (auto& v : f) v = rng.uniform(0.0, 1.0);
    p.features = f;
  }
  return pairs;
}

struct ManualClock {
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1000);
  Clock fn() const {
    auto n = now;
    return [n] { return n->load(); };
  }
};

}  // namespace

TEST_CASE("pair enumeration counts") {
  const auto six = enumerate_pairs(candidate_sets(4, 3));
  CHECK(six.size() == 4 * 6);
  int fixed = 0;
  for (const auto& p : six) fixed += p.source == Source::kFixedRule;
  CHECK(fixed == 4 * 3);
  const auto one = enumerate_pairs(candidate_sets(1, 1));
  REQUIRE(one.size() == 1);
  CHECK(one[0].source == Source::kFixedRule);
  CHECK(one[0].label == Label::kA);
  for (const auto& p : six)
    if (p.contains_ground_truth()) CHECK(p.label == (p.a_is_ground_truth ? Label::kA : Label::kB));
  std::set<std::string> ids;
  for (const auto& p : six) CHECK(ids.insert(p.pair_id).second);
}

TEST_CASE("missing variants are rejected") {
  auto sets = candidate_sets(1, 0);
  CHECK_THROWS_AS(enumerate_pairs(sets), Error);
}

TEST_CASE("pair json round trip") {
  auto pairs = featured_pairs(1, 3, 1);
  for (const auto& p : pairs) CHECK(to_json(pair_from_json(to_json(p))) == to_json(p));
}

TEST_CASE("standardizer contract") {
  Rng rng(3);
  std::vector<std::vector<double>> rows(50, std::vector<double>(4));
  for (auto& r : rows) {
    r[0] = rng.normal(5.0, 2.0);
    r[1] = rng.uniform(-100.0, 100.0);
    r[2] = 7.0;  // constant
    r[3] = rng.normal();
  }
  const auto s = Standardizer::fit(rows);
  std::vector<double> mean(4, 0.0), sq(4, 0.0);
  for (const auto& r : rows) {
    const auto t = s.apply(r);
    for (int k = 0; k < 4; ++k) {
      mean[k] += t[k] / rows.size();
      sq[k] += t[k] * t[k] / rows.size();
    }
  }
  for (int k : {0, 1, 3}) {
    CHECK(std::abs(mean[k]) < 1e-9);
    CHECK(std::abs(std::sqrt(sq[k] - mean[k] * mean[k]) - 1.0) < 1e-6);
  }
  CHECK(mean[2] == 0.0);
  CHECK(sq[2] == 0.0);

  // Affine: apply(a + t (b - a)) = apply(a) + t (apply(b) - apply(a)).
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(4), b(4), m(4);
    for (int k = 0; k < 4; ++k) {
      a[k] = rng.normal(0, 10);
      b[k] = rng.normal(0, 10);
    }
    const double t = rng.uniform(-2, 2);
    for (int k = 0; k < 4; ++k) m[k] = a[k] + t * (b[k] - a[k]);
    const auto ta = s.apply(a), tb = s.apply(b), tm = s.apply(m);
    for (int k = 0; k < 4; ++k) CHECK(tm[k] == doctest::Approx(ta[k] + t * (tb[k] - ta[k])).epsilon(1e-9));
  }
  const std::vector<std::vector<double>> same(5, std::vector<double>{1.0, 2.0});
  for (const auto& r : same)
    for (double v : Standardizer::fit(same).apply(r)) CHECK(v == 0.0);
  CHECK_THROWS_AS(Standardizer::fit({}), Error);
}

TEST_CASE("svm separates a separable set") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  separable_set(200, 5, x, y);
  const auto res = svm_train(x, y);
  int correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += (res.model.predict(x[i]) == Label::kA ? 1 : -1) == y[i];
  CHECK(correct >= 198);
  CHECK(res.grid.size() == 4 + 12 + 24);
  // Deterministic prediction.
  CHECK(res.model.decision(x[0]) == res.model.decision(x[0]));

  // Antisymmetry probe: swapping halves flips the label on most points (diagnostic only).
  int flipped = 0;
  for (const auto& f : x) {
    std::vector<double> s(f.begin() + 6, f.end());
    s.insert(s.end(), f.begin(), f.begin() + 6);
    flipped += res.model.predict(s) != res.model.predict(f);
  }
  MESSAGE("antisymmetry probe: " << flipped << "/" << x.size() << " labels flip when halves are swapped");
}

TEST_CASE("duplicating the data keeps the selected hyperparameters") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  separable_set(200, 8, x, y);
  const auto a = svm_train(x, y);
  auto x2 = x;
  auto y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  const auto b = svm_train(x2, y2);
  CHECK(a.best.params.kernel == b.best.params.kernel);
  CHECK(a.best.params.C == b.best.params.C);
  CHECK(a.best.params.gamma == b.best.params.gamma);
  CHECK(a.best.params.degree == b.best.params.degree);
}

TEST_CASE("ten samples over five folds") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  separable_set(10, 9, x, y);
  y[0] = 1;
  y[1] = -1;
  CHECK_NOTHROW(svm_train(x, y, 5));
  const std::vector<int> one(10, 1);
  CHECK_THROWS_AS(svm_train(x, one, 5), Error);
}

TEST_CASE("svm model json round trip") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  separable_set(60, 10, x, y);
  const auto m = svm_train(x, y).model;
  const auto back = SvmModel::from_json(Json::parse(m.to_json().dump()));
  for (const auto& f : x) CHECK(back.decision(f) == m.decision(f));
}

TEST_CASE("hybrid labeling partitions pairs") {
  auto pairs = featured_pairs(30, 3, 11);
  const auto res = hybrid_label(pairs, 40, simulated_human_choice);
  CHECK(res.fixed_rule == 90);
  CHECK(res.human == 40);
  CHECK(res.svm_labeled == 180 - 90 - 40);
  CHECK(res.fixed_rule + res.human + res.svm_labeled == static_cast<int>(res.pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].contains_ground_truth()) {
      CHECK(res.pairs[i].source == Source::kFixedRule);
      CHECK(res.pairs[i].label == pairs[i].label);
    }
    CHECK(res.pairs[i].label != Label::kUnlabeled);
  }

  // A pre-trained model with zero budget labels every non-GT pair.
  const auto zero = hybrid_label(pairs, 0, nullptr, &res.svm->model);
  CHECK(zero.human == 0);
  CHECK(zero.svm_labeled == 90);

  // Budget beyond the available pairs is clamped.
  const auto all = hybrid_label(pairs, 10000, simulated_human_choice);
  CHECK(all.human == 90);
  CHECK(all.svm_labeled == 0);
  CHECK_FALSE(all.svm.has_value());

  // Only ground-truth pairs: no SVM at all.
  auto gt_only = enumerate_pairs(candidate_sets(5, 1));
  const auto g = hybrid_label(gt_only, 3, nullptr);
  CHECK(g.fixed_rule == 5);
  CHECK(g.human == 0);
  CHECK(g.svm_labeled == 0);
}

TEST_CASE("human queue follows provisional uncertainty") {
  auto pairs = featured_pairs(20, 3, 12);
  const auto trained = hybrid_label(pairs, 40, simulated_human_choice);
  const auto queue = plan_human_queue(pairs, &trained.svm->model);
  for (std::size_t k = 1; k < queue.size(); ++k)
    CHECK(std::abs(trained.svm->model.decision(feature_row(pairs[queue[k - 1]]))) <=
          std::abs(trained.svm->model.decision(feature_row(pairs[queue[k]]))));
  const auto plain = plan_human_queue(pairs, nullptr);
  CHECK(std::is_sorted(plain.begin(), plain.end()));
}

TEST_CASE("pair store leases, write-once labels and replay") {
  const auto dir = refl::testing::scratch_dir("store");
  const auto log = dir / "pairs.jsonl";
  PairStore::create(log, featured_pairs(2, 3, 13));
  ManualClock clock;
  PairStore store(log, clock.fn(), 1000);
  CHECK(store.progress().unlabeled == 6);
  CHECK(store.progress().fixed_rule == 6);

  const auto c1 = store.next();
  const auto c2 = store.next();
  REQUIRE(c1);
  REQUIRE(c2);
  CHECK(c1->pair.pair_id != c2->pair.pair_id);
  CHECK(c1->lease_expiry_ms == 2000);
  CHECK(store.label(c1->pair.pair_id, Label::kA, Source::kHuman, "bogus") == LabelOutcome::kStaleLease);
  CHECK(store.label(c1->pair.pair_id, Label::kA, Source::kHuman) == LabelOutcome::kLeasedElsewhere);
  CHECK(store.label(c1->pair.pair_id, Label::kA, Source::kHuman, c1->lease_id) == LabelOutcome::kAccepted);
  CHECK(store.label(c1->pair.pair_id, Label::kB, Source::kHuman) == LabelOutcome::kAlreadyLabeled);
  CHECK(store.progress().human == 1);

  // Lease expiry frees the pair and invalidates the old lease.
  clock.now->store(5000);
  CHECK(store.label(c2->pair.pair_id, Label::kB, Source::kHuman, c2->lease_id) == LabelOutcome::kStaleLease);
  const auto c3 = store.next();
  REQUIRE(c3);
  CHECK(c3->pair.pair_id == c2->pair.pair_id);
  CHECK(store.label("nope", Label::kA, Source::kHuman) == LabelOutcome::kNotFound);
  CHECK(store.label(c3->pair.pair_id, Label::kB, Source::kSvm, c3->lease_id) == LabelOutcome::kAccepted);

  PairStore replay(log, clock.fn(), 1000);
  CHECK(replay.progress().human == 1);
  CHECK(replay.progress().svm == 1);
  CHECK(replay.find(c1->pair.pair_id)->label == Label::kA);
  CHECK(replay.find(c3->pair.pair_id)->label == Label::kB);
}

TEST_CASE("http api serves pairs, labels and progress") {
  const auto dir = refl::testing::scratch_dir("http");
  const auto log = dir / "pairs.jsonl";
  PairStore::create(log, featured_pairs(3, 3, 14));
  write_text_file(dir / "hq/face_0.png", "not really a png");
  PairStore store(log);
  AnnotationServer server(store, dir);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);

  auto progress = Json::parse(cli.Get("/api/progress")->body);
  CHECK(progress["unlabeled"] == 9);
  CHECK(progress["total"] == 18);

  auto r = cli.Get("/api/pairs/next");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  const auto pair = Json::parse(r->body);
  for (const char* key : {"pair_id", "image_a_url", "image_b_url", "attrs", "lease_expiry"}) CHECK(pair.contains(key));
  const std::string id = pair["pair_id"];

  auto bad = cli.Post("/api/pairs/" + id + "/label", R"({"choice":"c"})", "application/json");
  CHECK(bad->status == 400);
  auto stale = cli.Post("/api/pairs/" + id + "/label", R"({"choice":"a","lease_id":"old"})", "application/json");
  CHECK(stale->status == 409);
  Json body{{"choice", "b"}, {"lease_id", pair["lease_id"]}};
  auto ok = cli.Post("/api/pairs/" + id + "/label", body.dump(), "application/json");
  CHECK(ok->status == 200);
  auto again = cli.Post("/api/pairs/" + id + "/label", body.dump(), "application/json");
  CHECK(again->status == 409);
  CHECK(cli.Post("/api/pairs/zzz/label", R"({"choice":"a"})", "application/json")->status == 404);

  progress = Json::parse(cli.Get("/api/progress")->body);
  CHECK(progress["human"] == 1);
  CHECK(progress["unlabeled"] == 8);

  auto img = cli.Get("/images/hq/face_0.png");
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->body == "not really a png");

  // Concurrent checkouts never share a pair.
  std::vector<std::string> ids(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      auto res = c.Get("/api/pairs/next");
      if (res && res->status == 200) ids[t] = Json::parse(res->body)["pair_id"];
    });
  for (auto& t : threads) t.join();
  std::set<std::string> uniq(ids.begin(), ids.end());
  CHECK(uniq.size() == 8);
  CHECK(uniq.count("") == 0);
  CHECK(cli.Get("/api/pairs/next")->status == 204);

  server.stop();
  const auto lines = read_jsonl(log);
  CHECK(lines.back()["type"] == "label");
  CHECK(lines.back()["pair_id"] == id);
}
