// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refl/dataset.hpp"
#include "refl/io.hpp"

namespace refl::annotation {

enum class Label { kUnlabeled, kA, kB };
enum class Source { kNone, kFixedRule, kHuman, kSvm };

const char* to_string(Label l);
const char* to_string(Source s);
Label label_from_string(const std::string& s);
Source source_from_string(const std::string& s);

inline constexpr int kFeatureDim = 12;
using FeatureVector = std::array<double, kFeatureDim>;

struct PreferencePair {
  std::string pair_id;
  std::string face_id;
  std::string image_a_path;  // relative to the run directory
  std::string image_b_path;
  std::string ref_path;
  dataset::Attributes attrs;
  bool a_is_ground_truth = false;
  bool b_is_ground_truth = false;
  Label label = Label::kUnlabeled;
  Source source = Source::kNone;
  std::optional<FeatureVector> features;

  bool contains_ground_truth() const { return a_is_ground_truth || b_is_ground_truth; }
};

Json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const Json& j);

// One ground truth plus k restored candidates for a face.
struct CandidateSet {
  std::string face_id;
  std::string gt_path;
  std::vector<std::string> variant_paths;
  dataset::Attributes attrs;
};

// C(k+1, 2) pairs per face. Ground truth is always image_a of its pairs and
// those pairs are labeled a by the fixed rule.
std::vector<PreferencePair> enumerate_pairs(const std::vector<CandidateSet>& sets);

// Per-dimension mean/std scaler (population std). Zero-variance dimensions map to 0.
struct Standardizer {
  std::vector<double> mean, stddev;

  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& v) const;
  std::size_t dim() const { return mean.size(); }
};

enum class Kernel { kLinear, kRbf, kPoly };
const char* to_string(Kernel k);
Kernel kernel_from_string(const std::string& s);

// gamma <= 0 means the "scale" heuristic 1 / (dim * Var(X)), resolved at fit time.
struct SvmParams {
  Kernel kernel = Kernel::kLinear;
  double C = 1.0;
  double gamma = 0.0;
  int degree = 3;
  double coef0 = 0.0;
};

struct SvmModel {
  SvmParams params;  // gamma resolved
  Standardizer scaler;
  std::vector<std::vector<double>> support;  // standardized support vectors
  std::vector<double> coef;                  // alpha_i * y_i
  double bias = 0.0;

  // Signed margin; positive means image a is preferred.
  double decision(const std::vector<double>& features) const;
  Label predict(const std::vector<double>& features) const;
  Json to_json() const;
  static SvmModel from_json(const Json& j);
};

struct SvmGrid {
  std::vector<Kernel> kernels = {Kernel::kLinear, Kernel::kRbf, Kernel::kPoly};
  std::vector<double> C = {1.0, 10.0, 100.0, 1000.0};
  std::vector<double> gamma = {0.0, 0.01, 0.1};  // 0 = scale heuristic
  std::vector<int> degree = {2, 3};
};

struct GridPoint {
  SvmParams params;
  double cv_accuracy = 0.0;
};

struct SvmTrainResult {
  SvmModel model;
  GridPoint best;
  std::vector<GridPoint> grid;
};

// Labels are +1 (a preferred) / -1 (b preferred). Fold of sample i is i mod folds.
SvmTrainResult svm_train(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                         int cv_folds = 5, const SvmGrid& grid = {});
// Single fit with fixed hyperparameters (used inside cross-validation).
SvmModel svm_fit(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                 const SvmParams& params);

using HumanAnnotator = std::function<Label(const PreferencePair&)>;

// Order in which unlabeled non-ground-truth pairs are offered to humans:
// ascending |margin| of a provisional model when given, else input order.
std::vector<std::size_t> plan_human_queue(const std::vector<PreferencePair>& pairs, const SvmModel* provisional);

struct HybridResult {
  std::vector<PreferencePair> pairs;
  std::optional<SvmTrainResult> svm;
  int fixed_rule = 0, human = 0, svm_labeled = 0;
};

// Routes the first `human_budget` queued pairs to `human`, trains the SVM on
// all human labels and labels the rest with it. A pre-trained model skips the
// training step. Pairs must carry features.
HybridResult hybrid_label(std::vector<PreferencePair> pairs, int human_budget, const HumanAnnotator& human,
                          const SvmModel* pretrained = nullptr, const SvmModel* provisional = nullptr);

std::vector<double> feature_row(const PreferencePair& p);

// Test double for a human annotator: prefers the candidate with the smaller
// perceptual distance to the reference (feature slot 2 vs 8), sharper on ties.
Label simulated_human_choice(const PreferencePair& p);

struct Progress {
  int total = 0, fixed_rule = 0, human = 0, svm = 0, unlabeled = 0;
  Json to_json() const;
};

using Clock = std::function<std::int64_t()>;  // milliseconds since epoch
std::int64_t system_clock_ms();

struct Checkout {
  PreferencePair pair;
  std::string lease_id;
  std::int64_t lease_expiry_ms = 0;
};

enum class LabelOutcome { kAccepted, kAlreadyLabeled, kStaleLease, kLeasedElsewhere, kNotFound, kNotEligible };
const char* to_string(LabelOutcome o);

// Pair store backed by an append-only JSONL log. Lines are either
// {"type":"pair", ...pair fields} or {"type":"label", pair_id, label, source}.
// Replay applies label events in order, last write wins.
class PairStore {
 public:
  PairStore(std::filesystem::path log_path, Clock clock = system_clock_ms, std::int64_t lease_ms = 120000);

  static void create(const std::filesystem::path& log_path, const std::vector<PreferencePair>& pairs);

  // Leases the next unlabeled pair needing a human label, or nullopt when none remain.
  std::optional<Checkout> next();
  // Write-once label. When lease_id is empty the pair must not be leased by anyone else.
  LabelOutcome label(const std::string& pair_id, Label label, Source source, const std::string& lease_id = "");
  // Overrides queue order with the given pair ids (others follow in log order).
  void set_priority(const std::vector<std::string>& pair_ids);

  Progress progress() const;
  std::vector<PreferencePair> pairs() const;
  std::optional<PreferencePair> find(const std::string& pair_id) const;
  const std::filesystem::path& log_path() const { return path_; }
  void flush();

 private:
  struct Lease {
    std::string id;
    std::int64_t expiry = 0;
  };

  std::filesystem::path path_;
  Clock clock_;
  std::int64_t lease_ms_;
  mutable std::mutex mu_;
  std::vector<PreferencePair> pairs_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::size_t> order_;
  std::map<std::string, Lease> leases_;
  std::uint64_t lease_counter_ = 0;
};

// HTTP front end for a PairStore (GET /api/pairs/next, POST /api/pairs/{id}/label,
// GET /api/progress, GET /images/... and an optional static UI directory).
class AnnotationServer {
 public:
  AnnotationServer(PairStore& store, std::filesystem::path image_root, std::filesystem::path ui_dir = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds and serves on a background thread. port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  // Blocks the calling thread until stop() is called from elsewhere.
  void wait();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace refl::annotation
