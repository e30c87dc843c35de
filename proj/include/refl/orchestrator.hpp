// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refl/annotation.hpp"
#include "refl/dataset.hpp"
#include "refl/eval.hpp"
#include "refl/refl_trainer.hpp"
#include "refl/restorer.hpp"
#include "refl/reward_model.hpp"

namespace refl::orchestrator {

// Canonical stage order; each stage reads the artifacts of the ones before it.
inline const std::vector<std::string> kStages = {"dataset",   "degrade",   "pretrain",   "restore-variants",
                                                 "train-svm", "train-frm", "refl-train", "eval"};

struct DatasetStage {
  int count = 320;
  int size = 64;
  dataset::SplitFractions fractions{0.8, 0.1, 0.1};
};

struct AnnotationStage {
  int faces = 64;  // train-split faces that receive restoration variants
  // Any of early, mid, late, blurred. Three variants give six pairs per face.
  std::vector<std::string> variants = {"early", "late", "blurred"};
  double early_fraction = 0.1;  // denoiser progress at which the early checkpoint is taken
  double mid_fraction = 0.5;
  double blur_sigma = 1.5;
  int human_budget = 60;
  // Fill the rest of the human budget with the simulated annotator.
  bool simulate_humans = true;
};

struct EvalStage {
  std::string split = "test";
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path run_dir = "runs/default";
  DatasetStage dataset;
  restorer::RestorerConfig restorer;
  restorer::PretrainConfig pretrain;
  AnnotationStage annotation;
  reward::FrmConfig frm;
  reward::FrmTrainConfig frm_train;
  trainer::ReflConfig refl;
  EvalStage eval;
  std::vector<std::string> stages = kStages;

  Json to_json() const;
  // Missing keys keep their defaults; unknown keys are a config error.
  static RunConfig from_json(const Json& j);
  void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);

// REFL_<KEY>[__<SUBKEY>...]=<value> sets nested keys (lower-cased). Values that
// parse as JSON are used as such, anything else as a string.
Json apply_env_overrides(Json j, const std::vector<std::pair<std::string, std::string>>& env);
std::vector<std::pair<std::string, std::string>> refl_environment();

// Sets the value at a dotted path ("refl.iterations").
Json set_path(Json j, const std::string& dotted, const Json& value);

using Logger = std::function<void(const std::string&)>;

struct StageResult {
  std::string stage;
  bool skipped = false;
  std::string fingerprint;
  Json summary;
};

struct PipelineOptions {
  bool force = false;  // rerun stages even when fingerprints match
  Logger log;
};

// Runs the named stages in the order given (all of cfg.stages when empty).
// Stages whose fingerprint and outputs are unchanged are skipped.
std::vector<StageResult> run_pipeline(const RunConfig& cfg, const std::vector<std::string>& stages = {},
                                      const PipelineOptions& opt = {});

// Artifact locations inside a run directory.
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path manifest() const { return root / "dataset" / "manifest.jsonl"; }
  std::filesystem::path degraded_dir() const { return root / "degraded"; }
  std::filesystem::path checkpoint(const std::string& name) const { return root / "checkpoints" / (name + ".ckpt"); }
  std::filesystem::path label_log() const { return root / "annotation" / "labels.jsonl"; }
  std::filesystem::path preferences() const { return root / "annotation" / "preferences.jsonl"; }
  std::filesystem::path svm_model() const { return root / "annotation" / "svm.json"; }
  std::filesystem::path stage_record(const std::string& stage) const {
    return root / "stages" / (stage + ".json");
  }
  std::filesystem::path eval_dir(const std::string& name) const { return root / "eval" / name; }
};

// Test items for one split: ground truth, degraded input, tags and landmarks.
std::vector<eval::TestItem> load_split(const RunConfig& cfg, const std::string& split);

// Records one human label through the pair store. choice is "a" or "b".
annotation::LabelOutcome label_pair(const RunConfig& cfg, const std::string& pair_id, const std::string& choice);

// Serves the annotation API for the run until *stop becomes true, then flushes
// the label log. Calls on_ready with the bound port.
void serve_annotation(const RunConfig& cfg, const std::string& host, int port, const std::filesystem::path& ui_dir,
                      const std::atomic<bool>& stop, const std::function<void(int)>& on_ready = nullptr);

// Hacking probe of a restorer checkpoint on the eval split, scored by an FRM checkpoint.
trainer::HackingReport hacking_probe(const RunConfig& cfg, const std::filesystem::path& restorer_ckpt,
                                     const std::filesystem::path& frm_ckpt);

}  // namespace refl::orchestrator
