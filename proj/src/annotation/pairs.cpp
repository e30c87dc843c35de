// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "refl/annotation.hpp"
#include "refl/error.hpp"

namespace refl::annotation {

const char* to_string(Label l) {
  switch (l) {
    case Label::kA:
      return "a";
    case Label::kB:
      return "b";
    default:
      return "unlabeled";
  }
}

const char* to_string(Source s) {
  switch (s) {
    case Source::kFixedRule:
      return "fixed_rule";
    case Source::kHuman:
      return "human";
    case Source::kSvm:
      return "svm";
    default:
      return "none";
  }
}

Label label_from_string(const std::string& s) {
  if (s == "a") return Label::kA;
  if (s == "b") return Label::kB;
  if (s == "unlabeled") return Label::kUnlabeled;
  fail(ErrorCode::kInvalidArgument, "unknown label '" + s + "' (expected a or b)");
}

Source source_from_string(const std::string& s) {
  if (s == "fixed_rule") return Source::kFixedRule;
  if (s == "human") return Source::kHuman;
  if (s == "svm") return Source::kSvm;
  if (s == "none") return Source::kNone;
  fail(ErrorCode::kInvalidArgument, "unknown label source '" + s + "'");
}

Json to_json(const PreferencePair& p) {
  Json j = Json::object();
  j["pair_id"] = p.pair_id;
  j["face_id"] = p.face_id;
  j["image_a_path"] = p.image_a_path;
  j["image_b_path"] = p.image_b_path;
  j["ref_path"] = p.ref_path;
  j["attrs"] = dataset::to_json(p.attrs);
  j["a_is_ground_truth"] = p.a_is_ground_truth;
  j["b_is_ground_truth"] = p.b_is_ground_truth;
  j["label"] = to_string(p.label);
  if (p.source != Source::kNone) j["source"] = to_string(p.source);
  if (p.features) j["features"] = *p.features;
  return j;
}

PreferencePair pair_from_json(const Json& j) {
  PreferencePair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.face_id = j.value("face_id", std::string());
  p.image_a_path = j.at("image_a_path").get<std::string>();
  p.image_b_path = j.at("image_b_path").get<std::string>();
  p.ref_path = j.at("ref_path").get<std::string>();
  p.attrs = dataset::attributes_from_json(j.at("attrs"));
  p.a_is_ground_truth = j.value("a_is_ground_truth", false);
  p.b_is_ground_truth = j.value("b_is_ground_truth", false);
  p.label = label_from_string(j.value("label", std::string("unlabeled")));
  p.source = j.contains("source") ? source_from_string(j.at("source").get<std::string>()) : Source::kNone;
  if ((p.label == Label::kUnlabeled) != (p.source == Source::kNone))
    fail(ErrorCode::kInvalidArgument, "pair " + p.pair_id + ": label and source must be set together");
  if (j.contains("features")) {
    const auto v = j.at("features").get<std::vector<double>>();
    require(v.size() == kFeatureDim, "pair " + p.pair_id + ": feature vector must have 12 entries");
    FeatureVector f{};
    std::copy(v.begin(), v.end(), f.begin());
    p.features = f;
  }
  return p;
}

std::vector<PreferencePair> enumerate_pairs(const std::vector<CandidateSet>& sets) {
  std::vector<PreferencePair> out;
  for (const auto& s : sets) {
    require(!s.variant_paths.empty(), "face " + s.face_id + " has no restored variants");
    std::vector<std::string> nodes = {s.gt_path};
    nodes.insert(nodes.end(), s.variant_paths.begin(), s.variant_paths.end());
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        PreferencePair p;
        p.pair_id = s.face_id + "-" + std::to_string(i) + std::to_string(j);
        p.face_id = s.face_id;
        p.image_a_path = nodes[i];
        p.image_b_path = nodes[j];
        p.ref_path = s.gt_path;
        p.attrs = s.attrs;
        p.a_is_ground_truth = i == 0;
        if (p.a_is_ground_truth) {
          p.label = Label::kA;
          p.source = Source::kFixedRule;
        }
        out.push_back(std::move(p));
      }
  }
  return out;
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "standardizer needs at least one sample");
  const std::size_t d = rows[0].size();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (const auto& r : rows) {
    require(r.size() == d, "standardizer rows differ in length");
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += r[k];
  }
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) s.stddev[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
  for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& v) const {
  require(v.size() == mean.size(), "feature dimension " + std::to_string(v.size()) + " does not match fitted " +
                                       std::to_string(mean.size()));
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    // Relative floor so that constant columns with rounding noise still count as constant.
    const bool constant = stddev[k] <= 1e-12 * std::max(1.0, std::abs(mean[k]));
    out[k] = constant ? 0.0 : (v[k] - mean[k]) / stddev[k];
  }
  return out;
}

std::vector<double> feature_row(const PreferencePair& p) {
  if (!p.features) fail(ErrorCode::kState, "pair " + p.pair_id + " has no feature vector");
  return std::vector<double>(p.features->begin(), p.features->end());
}

Label simulated_human_choice(const PreferencePair& p) {
  const auto f = feature_row(p);
  if (f[2] != f[8]) return f[2] < f[8] ? Label::kA : Label::kB;
  return f[3] >= f[9] ? Label::kA : Label::kB;
}

std::vector<std::size_t> plan_human_queue(const std::vector<PreferencePair>& pairs, const SvmModel* provisional) {
  std::vector<std::size_t> queue;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (!pairs[i].contains_ground_truth() && pairs[i].label == Label::kUnlabeled) queue.push_back(i);
  if (provisional) {
    std::vector<double> margin(pairs.size(), 0.0);
    for (std::size_t i : queue) margin[i] = std::abs(provisional->decision(feature_row(pairs[i])));
    std::stable_sort(queue.begin(), queue.end(), [&](std::size_t a, std::size_t b) { return margin[a] < margin[b]; });
  }
  return queue;
}

HybridResult hybrid_label(std::vector<PreferencePair> pairs, int human_budget, const HumanAnnotator& human,
                          const SvmModel* pretrained, const SvmModel* provisional) {
  HybridResult res;
  for (auto& p : pairs)
    if (p.contains_ground_truth() && p.label == Label::kUnlabeled) {
      p.label = p.a_is_ground_truth ? Label::kA : Label::kB;
      p.source = Source::kFixedRule;
    }

  const auto queue = plan_human_queue(pairs, provisional);
  const std::size_t budget = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, human_budget)), queue.size());
  for (std::size_t k = 0; k < budget; ++k) {
    auto& p = pairs[queue[k]];
    if (!human) fail(ErrorCode::kState, "human budget is positive but no annotator was supplied");
    const Label l = human(p);
    require(l != Label::kUnlabeled, "annotator returned no label for " + p.pair_id);
    p.label = l;
    p.source = Source::kHuman;
  }

  const bool needs_svm = std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return p.label == Label::kUnlabeled; });
  if (needs_svm) {
    const SvmModel* model = pretrained;
    if (!model) {
      std::vector<std::vector<double>> x;
      std::vector<int> y;
      for (const auto& p : pairs)
        if (p.source == Source::kHuman) {
          x.push_back(feature_row(p));
          y.push_back(p.label == Label::kA ? 1 : -1);
        }
      if (x.empty()) fail(ErrorCode::kState, "no human labels to train the SVM annotator on");
      res.svm = svm_train(x, y, std::min<int>(5, static_cast<int>(x.size())));
      model = &res.svm->model;
    }
    for (auto& p : pairs)
      if (p.label == Label::kUnlabeled) {
        p.label = model->predict(feature_row(p));
        p.source = Source::kSvm;
      }
  }
  for (const auto& p : pairs) {
    res.fixed_rule += p.source == Source::kFixedRule;
    res.human += p.source == Source::kHuman;
    res.svm_labeled += p.source == Source::kSvm;
  }
  res.pairs = std::move(pairs);
  return res;
}

Json Progress::to_json() const {
  return Json{{"total", total}, {"fixed_rule", fixed_rule}, {"human", human}, {"svm", svm}, {"unlabeled", unlabeled}};
}

}  // namespace refl::annotation
