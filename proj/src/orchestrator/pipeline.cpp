// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cstdio>
#include <map>
#include <thread>

#include "refl/degradation.hpp"
#include "refl/error.hpp"
#include "refl/io.hpp"
#include "refl/metrics.hpp"
#include "refl/orchestrator.hpp"

namespace fs = std::filesystem;

namespace refl::orchestrator {

namespace {

// Bumped whenever a stage's outputs change meaning for the same inputs.
constexpr int kPipelineVersion = 1;

const std::map<std::string, std::vector<std::string>>& stage_deps() {
  static const std::map<std::string, std::vector<std::string>> deps = {
      {"dataset", {}},
      {"degrade", {"dataset"}},
      {"pretrain", {"degrade"}},
      {"restore-variants", {"pretrain"}},
      {"train-svm", {"restore-variants"}},
      {"train-frm", {"train-svm"}},
      {"refl-train", {"pretrain", "train-frm"}},
      {"eval", {"pretrain", "train-frm", "refl-train"}},
  };
  return deps;
}

std::uint64_t stage_seed(const RunConfig& cfg, const std::string& stage) { return Rng::derive(cfg.seed, fnv1a(stage)); }

std::string rel(const RunPaths& p, const fs::path& path) { return fs::relative(path, p.root).generic_string(); }

struct StageOutput {
  std::vector<fs::path> files;
  Json summary = Json::object();
};

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    fail(ErrorCode::kDependency, "missing " + path.string() + "; run stage '" + producer + "' first");
}

Json read_record(const RunPaths& paths, const std::string& stage) {
  const fs::path p = paths.stage_record(stage);
  if (!fs::exists(p)) return Json();
  return read_json_file(p);
}

bool outputs_intact(const RunPaths& paths, const Json& record) {
  if (!record.contains("outputs")) return false;
  for (const auto& [name, hash] : record.at("outputs").items()) {
    const fs::path f = paths.root / name;
    if (!fs::exists(f) || hex64(file_hash(f)) != hash.get<std::string>()) return false;
  }
  return true;
}

// ---------------------------------------------------------------- helpers

struct FaceData {
  dataset::ManifestRecord record;
  Image hq;
  Image lq;
};

std::vector<FaceData> load_faces(const RunPaths& paths, const std::string& split) {
  require_artifact(paths.manifest(), "dataset");
  const auto manifest = dataset::load_manifest(paths.manifest());
  std::vector<FaceData> out;
  for (const auto* r : manifest.split(split)) {
    const fs::path lq = paths.degraded_dir() / (r->id + ".png");
    require_artifact(lq, "degrade");
    out.push_back({*r, load_png(manifest.resolve(r->image_path)), load_png(lq)});
  }
  return out;
}

restorer::Restorer load_restorer(const RunPaths& paths, const std::string& name, const std::string& producer) {
  require_artifact(paths.checkpoint(name), producer);
  return restorer::Restorer::load(paths.checkpoint(name));
}

reward::RewardModel load_frm(const RunPaths& paths) {
  require_artifact(paths.checkpoint("frm"), "train-frm");
  return reward::RewardModel::load(paths.checkpoint("frm"));
}

std::vector<trainer::ReflExample> to_examples(const std::vector<FaceData>& faces) {
  std::vector<trainer::ReflExample> out;
  for (const auto& f : faces) out.push_back({f.hq, f.lq, f.record.attrs});
  return out;
}

// ---------------------------------------------------------------- stages

StageOutput stage_dataset(const RunConfig& cfg, const RunPaths& paths, const Logger&) {
  fs::remove_all(paths.root / "dataset");
  const auto m = dataset::build_manifest(cfg.dataset.count, stage_seed(cfg, "dataset"), cfg.dataset.fractions,
                                         paths.root / "dataset", cfg.dataset.size);
  StageOutput out;
  out.files.push_back(paths.manifest());
  for (const auto& r : m.records) out.files.push_back(m.resolve(r.image_path));
  out.summary = {{"count", m.records.size()},
                 {"train", m.split("train").size()},
                 {"val", m.split("val").size()},
                 {"test", m.split("test").size()}};
  return out;
}

StageOutput stage_degrade(const RunConfig& cfg, const RunPaths& paths, const Logger&) {
  require_artifact(paths.manifest(), "dataset");
  const auto m = dataset::load_manifest(paths.manifest());
  fs::remove_all(paths.degraded_dir());
  ensure_directory(paths.degraded_dir());
  const std::uint64_t seed = stage_seed(cfg, "degrade");
  StageOutput out;
  std::vector<Json> params;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    Rng rng(Rng::derive(seed, i));
    const auto p = degradation::sample_degradation_params(rng);
    const Image lq = degradation::degrade(load_png(m.resolve(r.image_path)), p, rng);
    const fs::path f = paths.degraded_dir() / (r.id + ".png");
    save_png(lq, f);
    out.files.push_back(f);
    params.push_back({{"id", r.id}, {"params", degradation::to_json(p)}});
  }
  write_jsonl(paths.degraded_dir() / "params.jsonl", params);
  out.files.push_back(paths.degraded_dir() / "params.jsonl");
  out.summary = {{"count", m.records.size()}};
  return out;
}

int checkpoint_step(double fraction, int steps) { return std::max(1, static_cast<int>(std::lround(fraction * steps))); }

StageOutput stage_pretrain(const RunConfig& cfg, const RunPaths& paths, const Logger& log) {
  const auto faces = load_faces(paths, "train");
  if (faces.empty()) fail(ErrorCode::kConfig, "pretrain: the train split is empty");
  std::vector<restorer::TrainingPair> data;
  for (const auto& f : faces) data.push_back({f.hq, f.lq});

  const std::uint64_t seed = stage_seed(cfg, "pretrain");
  restorer::RestorerConfig rc = cfg.restorer;
  rc.seed = Rng::derive(seed, rc.seed);
  restorer::PretrainConfig pc = cfg.pretrain;
  pc.seed = Rng::derive(seed, pc.seed);
  restorer::Restorer r(rc);

  ensure_directory(paths.root / "checkpoints");
  const int early = checkpoint_step(cfg.annotation.early_fraction, pc.denoiser_steps);
  const int mid = checkpoint_step(cfg.annotation.mid_fraction, pc.denoiser_steps);
  bool early_saved = false, mid_saved = false;
  const auto t0 = std::chrono::steady_clock::now();
  const auto plog = restorer::pretrain(r, data, pc, [&](int step, const restorer::Restorer& cur) {
    if (step == early) {
      cur.save(paths.checkpoint("restorer_early"));
      early_saved = true;
    }
    if (step == mid) {
      cur.save(paths.checkpoint("restorer_mid"));
      mid_saved = true;
    }
    if (log && step % 250 == 0) log("pretrain: denoiser step " + std::to_string(step));
  });
  // Without denoiser steps the intermediate checkpoints equal the final one.
  if (!early_saved) r.save(paths.checkpoint("restorer_early"));
  if (!mid_saved) r.save(paths.checkpoint("restorer_mid"));
  r.save(paths.checkpoint("restorer_base"));

  auto tail_mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const std::size_t k = std::min<std::size_t>(50, v.size());
    double s = 0.0;
    for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
    return s / static_cast<double>(k);
  };
  StageOutput out;
  out.files = {paths.checkpoint("restorer_early"), paths.checkpoint("restorer_mid"), paths.checkpoint("restorer_base")};
  out.summary = {{"train_pairs", data.size()},
                 {"ae_loss", tail_mean(plog.ae_loss)},
                 {"denoiser_loss", tail_mean(plog.denoiser_loss)},
                 {"latent_scale", r.latent_scale()},
                 {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  return out;
}

bool same_pairs(const std::vector<annotation::PreferencePair>& a, const std::vector<annotation::PreferencePair>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].pair_id != b[i].pair_id || a[i].image_a_path != b[i].image_a_path ||
        a[i].image_b_path != b[i].image_b_path || a[i].features != b[i].features)
      return false;
  return true;
}

StageOutput stage_restore_variants(const RunConfig& cfg, const RunPaths& paths, const Logger& log) {
  auto faces = load_faces(paths, "train");
  if (faces.size() > static_cast<std::size_t>(cfg.annotation.faces)) faces.resize(cfg.annotation.faces);
  std::vector<Image> lq;
  for (const auto& f : faces) lq.push_back(f.lq);

  const std::uint64_t noise = Rng::derive(stage_seed(cfg, "restore-variants"), 1);
  std::map<std::string, std::vector<Image>> outputs;
  auto run = [&](const std::string& ckpt) {
    const auto r = load_restorer(paths, ckpt, "pretrain");
    return r.restore(lq, {r.default_steps(), noise, 0});
  };
  for (const auto& v : cfg.annotation.variants) {
    if (v == "early") outputs[v] = run("restorer_early");
    if (v == "mid") outputs[v] = run("restorer_mid");
    if (v == "late") outputs[v] = run("restorer_base");
  }
  for (const auto& v : cfg.annotation.variants)
    if (v == "blurred") {
      const auto late = outputs.count("late") ? outputs["late"] : run("restorer_base");
      std::vector<Image> blurred;
      for (const auto& img : late) blurred.push_back(degradation::gaussian_blur(img, cfg.annotation.blur_sigma));
      outputs[v] = blurred;
    }

  fs::remove_all(paths.root / "variants");
  StageOutput out;
  std::vector<annotation::CandidateSet> sets;
  const auto manifest_dir = paths.manifest().parent_path();
  for (std::size_t i = 0; i < faces.size(); ++i) {
    annotation::CandidateSet s;
    s.face_id = faces[i].record.id;
    s.gt_path = rel(paths, manifest_dir / faces[i].record.image_path);
    s.attrs = faces[i].record.attrs;
    for (const auto& v : cfg.annotation.variants) {
      const fs::path f = paths.root / "variants" / s.face_id / (v + ".png");
      ensure_directory(f.parent_path());
      save_png(outputs[v][i], f);
      out.files.push_back(f);
      s.variant_paths.push_back(rel(paths, f));
    }
    sets.push_back(std::move(s));
  }
  auto pairs = annotation::enumerate_pairs(sets);
  std::map<std::string, Image> cache;
  auto image = [&](const std::string& p) -> const Image& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, load_png(paths.root / p)).first;
    return it->second;
  };
  for (auto& p : pairs) {
    const auto f = metrics::pair_features(image(p.image_a_path), image(p.image_b_path), image(p.ref_path));
    p.features = annotation::FeatureVector{};
    std::copy(f.begin(), f.end(), p.features->begin());
  }
  std::vector<Json> lines;
  for (const auto& p : pairs) lines.push_back(annotation::to_json(p));
  write_jsonl(paths.root / "annotation" / "pairs.jsonl", lines);
  out.files.push_back(paths.root / "annotation" / "pairs.jsonl");

  // Keep an existing label log (and its human labels) when the pairs are unchanged.
  bool keep = false;
  if (fs::exists(paths.label_log())) {
    annotation::PairStore existing(paths.label_log());
    keep = same_pairs(existing.pairs(), pairs);
  }
  if (!keep) {
    fs::remove(paths.label_log());
    annotation::PairStore::create(paths.label_log(), pairs);
  } else if (log) {
    log("restore-variants: pairs unchanged, keeping existing label log");
  }
  std::size_t gt_pairs = 0;
  for (const auto& p : pairs) gt_pairs += p.contains_ground_truth();
  out.summary = {{"faces", faces.size()},
                 {"variants", cfg.annotation.variants},
                 {"pairs", pairs.size()},
                 {"ground_truth_pairs", gt_pairs}};
  return out;
}

StageOutput stage_train_svm(const RunConfig& cfg, const RunPaths& paths, const Logger& log) {
  require_artifact(paths.label_log(), "restore-variants");
  annotation::PairStore store(paths.label_log());
  auto pairs = store.pairs();
  int human = 0;
  for (const auto& p : pairs) human += p.source == annotation::Source::kHuman;
  const int remaining = std::max(0, cfg.annotation.human_budget - human);
  std::size_t open = annotation::plan_human_queue(pairs, nullptr).size();
  const int needed = static_cast<int>(std::min<std::size_t>(remaining, open));
  if (needed > 0 && !cfg.annotation.simulate_humans)
    fail(ErrorCode::kDependency, "train-svm needs " + std::to_string(needed) + " more human labels (have " +
                                     std::to_string(human) + " of budget " +
                                     std::to_string(cfg.annotation.human_budget) +
                                     "); label pairs with 'annotate-serve' or 'label', or set "
                                     "annotation.simulate_humans");
  if (needed > 0 && log)
    log("train-svm: simulated annotator fills " + std::to_string(needed) + " of the human budget");
  const auto res = annotation::hybrid_label(pairs, needed, annotation::simulated_human_choice);

  int agree = 0, svm_total = 0;
  for (const auto& p : res.pairs)
    if (p.source == annotation::Source::kSvm) {
      ++svm_total;
      agree += p.label == annotation::simulated_human_choice(p);
    }
  std::vector<Json> lines;
  for (const auto& p : res.pairs) lines.push_back(annotation::to_json(p));
  write_jsonl(paths.preferences(), lines);
  Json svm = Json::object();
  if (res.svm) {
    svm = {{"model", res.svm->model.to_json()},
           {"cv_accuracy", res.svm->best.cv_accuracy},
           {"kernel", annotation::to_string(res.svm->best.params.kernel)},
           {"C", res.svm->best.params.C}};
  }
  write_text_file(paths.svm_model(), svm.dump(2) + "\n");

  StageOutput out;
  out.files = {paths.preferences(), paths.svm_model()};
  out.summary = {{"pairs", res.pairs.size()},
                 {"fixed_rule", res.fixed_rule},
                 {"human", res.human},
                 {"human_from_log", human},
                 {"simulated_human", needed},
                 {"svm", res.svm_labeled},
                 {"svm_cv_accuracy", res.svm ? res.svm->best.cv_accuracy : 0.0},
                 {"svm_agreement_with_simulated", svm_total ? static_cast<double>(agree) / svm_total : 0.0}};
  return out;
}

StageOutput stage_train_frm(const RunConfig& cfg, const RunPaths& paths, const Logger& log) {
  require_artifact(paths.preferences(), "train-svm");
  std::map<std::string, Image> cache;
  auto image = [&](const std::string& p) -> const Image& {
    auto it = cache.find(p);
    if (it == cache.end()) it = cache.emplace(p, load_png(paths.root / p)).first;
    return it->second;
  };
  // Every tenth face is held out to report generalization.
  std::map<std::string, int> face_index;
  std::vector<reward::PreferenceExample> train, held;
  for (const auto& line : read_jsonl(paths.preferences())) {
    const auto p = annotation::pair_from_json(line);
    if (p.label == annotation::Label::kUnlabeled) fail(ErrorCode::kState, "pair " + p.pair_id + " has no label");
    const int idx = face_index.emplace(p.face_id, static_cast<int>(face_index.size())).first->second;
    reward::PreferenceExample ex{image(p.image_a_path), image(p.image_b_path), p.attrs,
                                 p.label == annotation::Label::kA ? 0 : 1};
    (idx % 10 == 9 ? held : train).push_back(std::move(ex));
  }
  if (train.empty()) fail(ErrorCode::kState, "train-frm: no preference pairs");
  const std::uint64_t seed = stage_seed(cfg, "train-frm");
  reward::FrmConfig fc = cfg.frm;
  fc.seed = Rng::derive(seed, fc.seed);
  reward::FrmTrainConfig tc = cfg.frm_train;
  tc.seed = Rng::derive(seed, tc.seed);
  reward::RewardModel frm(fc);
  if (log) log("train-frm: " + std::to_string(train.size()) + " training pairs");
  const auto flog = reward::train_frm(frm, train, tc);
  ensure_directory(paths.root / "checkpoints");
  frm.save(paths.checkpoint("frm"));
  StageOutput out;
  out.files = {paths.checkpoint("frm")};
  out.summary = {{"train_pairs", train.size()},
                 {"heldout_pairs", held.size()},
                 {"final_loss", flog.loss.empty() ? 0.0 : flog.loss.back()},
                 {"train_accuracy", reward::preference_accuracy(frm, train)},
                 {"heldout_accuracy", held.empty() ? 0.0 : reward::preference_accuracy(frm, held)},
                 {"tau", frm.tau()}};
  return out;
}

StageOutput stage_refl_train(const RunConfig& cfg, const RunPaths& paths, const Logger& log) {
  auto r = load_restorer(paths, "restorer_base", "pretrain");
  auto frm = load_frm(paths);
  const auto faces = load_faces(paths, "train");
  if (faces.empty()) fail(ErrorCode::kConfig, "refl-train: the train split is empty");
  trainer::ReflConfig rc = cfg.refl;
  rc.seed = Rng::derive(stage_seed(cfg, "refl-train"), rc.seed);
  r.snapshot_base();

  fs::remove_all(paths.root / "refl");
  ensure_directory(paths.root / "refl");
  std::vector<Json> lines;
  std::vector<fs::path> periodic;
  const auto rlog = trainer::train_refl(rc, frm, r, to_examples(faces),
                                        [&](const trainer::IterationLog& it, const restorer::Restorer& cur,
                                            const reward::RewardModel& cur_frm) {
                                          lines.push_back(it.to_json());
                                          if (rc.checkpoint_every > 0 && it.iteration % rc.checkpoint_every == 0) {
                                            char tag[32];
                                            std::snprintf(tag, sizeof tag, "iter_%05d", it.iteration);
                                            const fs::path dir = paths.root / "refl" / "checkpoints";
                                            ensure_directory(dir);
                                            cur.save(dir / ("restorer_" + std::string(tag) + ".ckpt"));
                                            cur_frm.save(dir / ("frm_" + std::string(tag) + ".ckpt"));
                                            periodic.push_back(dir / ("restorer_" + std::string(tag) + ".ckpt"));
                                            periodic.push_back(dir / ("frm_" + std::string(tag) + ".ckpt"));
                                          }
                                          if (log && it.iteration % 50 == 0)
                                            log("refl-train: iteration " + std::to_string(it.iteration) +
                                                " score " + std::to_string(it.frm_score));
                                        });
  write_jsonl(paths.root / "refl" / "log.jsonl", lines);
  r.save(paths.checkpoint("restorer_refl"));
  frm.save(paths.checkpoint("frm_refl"));
  StageOutput out;
  out.files = {paths.checkpoint("restorer_refl"), paths.checkpoint("frm_refl"), paths.root / "refl" / "log.jsonl"};
  out.files.insert(out.files.end(), periodic.begin(), periodic.end());
  out.summary = {{"iterations", rlog.iterations.size()},
                 {"frm_updates", rlog.frm_updates},
                 {"final_drift", rlog.iterations.empty() ? 0.0 : rlog.iterations.back().drift}};
  return out;
}

StageOutput stage_eval(const RunConfig& cfg, const RunPaths& paths, const Logger&) {
  const auto base = load_restorer(paths, "restorer_base", "pretrain");
  const auto tuned = load_restorer(paths, "restorer_refl", "refl-train");
  const auto frm = load_frm(paths);
  const auto items = load_split(cfg, cfg.eval.split);
  if (items.empty()) fail(ErrorCode::kConfig, "eval: split '" + cfg.eval.split + "' is empty");
  const std::uint64_t noise = stage_seed(cfg, "eval");
  auto meta = [&](const std::string& ckpt) {
    return Json{{"restorer", ckpt},
                {"restorer_hash", hex64(file_hash(paths.checkpoint(ckpt)))},
                {"frm_hash", hex64(file_hash(paths.checkpoint("frm")))},
                {"split", cfg.eval.split},
                {"mode", restorer::to_string(cfg.restorer.mode)},
                {"noise_seed", hex64(noise)}};
  };
  const auto rep_base = eval::evaluate(base, frm, items, noise, meta("restorer_base"));
  const auto rep_refl = eval::evaluate(tuned, frm, items, noise, meta("restorer_refl"));
  eval::write_report(rep_base, paths.eval_dir("base"));
  eval::write_report(rep_refl, paths.eval_dir("refl"));
  const auto deltas = eval::compare(rep_base, rep_refl);
  write_text_file(paths.root / "eval" / "compare.json", eval::to_json(deltas).dump(2) + "\n");
  StageOutput out;
  for (const char* n : {"base", "refl"}) {
    out.files.push_back(paths.eval_dir(n) / "report.json");
    out.files.push_back(paths.eval_dir(n) / "report.csv");
  }
  out.files.push_back(paths.root / "eval" / "compare.json");
  Json means = Json::object();
  for (int k = 0; k < eval::kNumColumns; ++k)
    means[eval::kColumns[k].name] = {{"base", rep_base.mean[k]}, {"refl", rep_refl.mean[k]}};
  out.summary = {{"items", items.size()}, {"means", means}};
  return out;
}

Json stage_config(const RunConfig& cfg, const std::string& stage) {
  const Json all = cfg.to_json();
  if (stage == "dataset") return all["dataset"];
  if (stage == "degrade") return Json::object();
  if (stage == "pretrain")
    return {{"restorer", all["restorer"]},
            {"pretrain", all["pretrain"]},
            {"early_fraction", cfg.annotation.early_fraction},
            {"mid_fraction", cfg.annotation.mid_fraction}};
  if (stage == "restore-variants")
    return {{"faces", cfg.annotation.faces},
            {"variants", cfg.annotation.variants},
            {"blur_sigma", cfg.annotation.blur_sigma}};
  if (stage == "train-svm")
    return {{"human_budget", cfg.annotation.human_budget}, {"simulate_humans", cfg.annotation.simulate_humans}};
  if (stage == "train-frm") return {{"frm", all["frm"]}, {"frm_train", all["frm_train"]}};
  if (stage == "refl-train") return all["refl"];
  if (stage == "eval") return all["eval"];
  fail(ErrorCode::kConfig, "unknown stage '" + stage + "'");
}

StageOutput run_stage(const RunConfig& cfg, const RunPaths& paths, const std::string& stage, const Logger& log) {
  if (stage == "dataset") return stage_dataset(cfg, paths, log);
  if (stage == "degrade") return stage_degrade(cfg, paths, log);
  if (stage == "pretrain") return stage_pretrain(cfg, paths, log);
  if (stage == "restore-variants") return stage_restore_variants(cfg, paths, log);
  if (stage == "train-svm") return stage_train_svm(cfg, paths, log);
  if (stage == "train-frm") return stage_train_frm(cfg, paths, log);
  if (stage == "refl-train") return stage_refl_train(cfg, paths, log);
  if (stage == "eval") return stage_eval(cfg, paths, log);
  fail(ErrorCode::kConfig, "unknown stage '" + stage + "'");
}

}  // namespace

std::vector<eval::TestItem> load_split(const RunConfig& cfg, const std::string& split) {
  const RunPaths paths{cfg.run_dir};
  std::vector<eval::TestItem> out;
  for (auto& f : load_faces(paths, split))
    out.push_back({f.record.id, std::move(f.hq), std::move(f.lq), f.record.attrs, f.record.landmarks});
  return out;
}

std::vector<StageResult> run_pipeline(const RunConfig& cfg, const std::vector<std::string>& requested,
                                      const PipelineOptions& opt) {
  cfg.validate();
  const std::vector<std::string> stages = requested.empty() ? cfg.stages : requested;
  for (const auto& s : stages)
    if (!stage_deps().count(s)) fail(ErrorCode::kConfig, "unknown stage '" + s + "'");
  const RunPaths paths{cfg.run_dir};
  ensure_directory(paths.root / "stages");
  write_text_file(paths.root / "config.json", cfg.to_json().dump(2) + "\n");

  std::vector<StageResult> results;
  for (const auto& stage : stages) {
    Json inputs{{"stage", stage},
                {"version", kPipelineVersion},
                {"seed", cfg.seed},
                {"config", stage_config(cfg, stage)},
                {"upstream", Json::object()}};
    for (const auto& dep : stage_deps().at(stage)) {
      const Json rec = read_record(paths, dep);
      if (rec.is_null())
        fail(ErrorCode::kDependency,
             "stage '" + stage + "' needs the artifacts of stage '" + dep + "'; run stage '" + dep + "' first");
      inputs["upstream"][dep] = rec.at("fingerprint");
    }
    // Human labels feed the SVM, so the label log is an input of train-svm.
    if (stage == "train-svm" && fs::exists(paths.label_log()))
      inputs["label_log"] = hex64(file_hash(paths.label_log()));
    const std::string fp = hex64(fnv1a(inputs.dump()));

    const Json prev = read_record(paths, stage);
    if (!opt.force && !prev.is_null() && prev.value("fingerprint", "") == fp && outputs_intact(paths, prev)) {
      if (opt.log) opt.log(stage + ": up to date, skipped");
      results.push_back({stage, true, fp, prev.value("summary", Json::object())});
      continue;
    }
    if (opt.log) opt.log(stage + ": running");
    fs::remove(paths.stage_record(stage));
    StageOutput so = run_stage(cfg, paths, stage, opt.log);
    Json outputs = Json::object();
    for (const auto& f : so.files) outputs[rel(paths, f)] = hex64(file_hash(f));
    const Json record{{"stage", stage}, {"fingerprint", fp}, {"inputs", inputs}, {"outputs", outputs},
                      {"summary", so.summary}};
    write_text_file(paths.stage_record(stage), record.dump(2) + "\n");
    if (opt.log) opt.log(stage + ": done " + so.summary.dump());
    results.push_back({stage, false, fp, so.summary});
  }
  return results;
}

annotation::LabelOutcome label_pair(const RunConfig& cfg, const std::string& pair_id, const std::string& choice) {
  const RunPaths paths{cfg.run_dir};
  require_artifact(paths.label_log(), "restore-variants");
  if (choice != "a" && choice != "b") fail(ErrorCode::kInvalidArgument, "choice must be 'a' or 'b'");
  annotation::PairStore store(paths.label_log());
  const auto outcome = store.label(pair_id, choice == "a" ? annotation::Label::kA : annotation::Label::kB,
                                   annotation::Source::kHuman);
  store.flush();
  return outcome;
}

void serve_annotation(const RunConfig& cfg, const std::string& host, int port, const fs::path& ui_dir,
                      const std::atomic<bool>& stop, const std::function<void(int)>& on_ready) {
  const RunPaths paths{cfg.run_dir};
  require_artifact(paths.label_log(), "restore-variants");
  annotation::PairStore store(paths.label_log());
  annotation::AnnotationServer server(store, paths.root, ui_dir);
  const int bound = server.start(host, port);
  if (on_ready) on_ready(bound);
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  store.flush();
}

trainer::HackingReport hacking_probe(const RunConfig& cfg, const fs::path& restorer_ckpt, const fs::path& frm_ckpt) {
  if (!fs::exists(restorer_ckpt)) fail(ErrorCode::kDependency, "missing restorer checkpoint " + restorer_ckpt.string());
  if (!fs::exists(frm_ckpt)) fail(ErrorCode::kDependency, "missing FRM checkpoint " + frm_ckpt.string());
  const auto r = restorer::Restorer::load(restorer_ckpt);
  const auto frm = reward::RewardModel::load(frm_ckpt);
  std::vector<trainer::ReflExample> test;
  for (auto& it : load_split(cfg, cfg.eval.split)) test.push_back({std::move(it.hq), std::move(it.lq), it.attrs});
  return trainer::hacking_probe(frm, r, test, stage_seed(cfg, "eval"));
}

}  // namespace refl::orchestrator
