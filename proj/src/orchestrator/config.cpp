// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <set>

#include "refl/error.hpp"
#include "refl/io.hpp"
#include "refl/orchestrator.hpp"

extern char** environ;

namespace refl::orchestrator {

namespace {

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::kConfig, where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      fail(ErrorCode::kConfig, where_ + "." + key + ": " + e.what());
    }
  }

  const Json* section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void done() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) fail(ErrorCode::kConfig, where_ + ": unknown key '" + key + "'");
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void check_known(const Json& j, const Json& known, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::kConfig, where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(ErrorCode::kConfig, where + ": unknown key '" + key + "'");
}

template <class F>
auto wrap_config(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, where + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    fail(ErrorCode::kConfig, where + ": " + e.what());
  }
}

Json pretrain_json(const restorer::PretrainConfig& p) {
  return Json{{"ae_steps", p.ae_steps},       {"denoiser_steps", p.denoiser_steps},
              {"batch_size", p.batch_size},   {"ae_lr", p.ae_lr},
              {"denoiser_lr", p.denoiser_lr}, {"adaptation_weight", p.adaptation_weight},
              {"seed", p.seed}};
}

}  // namespace

Json RunConfig::to_json() const {
  return Json{
      {"seed", seed},
      {"run_dir", run_dir.string()},
      {"dataset",
       {{"count", dataset.count},
        {"size", dataset.size},
        {"fractions", {{"train", dataset.fractions.train}, {"val", dataset.fractions.val}, {"test", dataset.fractions.test}}}}},
      {"restorer", restorer.to_json()},
      {"pretrain", pretrain_json(pretrain)},
      {"annotation",
       {{"faces", annotation.faces},
        {"variants", annotation.variants},
        {"early_fraction", annotation.early_fraction},
        {"mid_fraction", annotation.mid_fraction},
        {"blur_sigma", annotation.blur_sigma},
        {"human_budget", annotation.human_budget},
        {"simulate_humans", annotation.simulate_humans}}},
      {"frm", {{"embed_dim", frm.embed_dim}, {"initial_tau", frm.initial_tau}, {"seed", frm.seed}}},
      {"frm_train",
       {{"steps", frm_train.steps}, {"batch_size", frm_train.batch_size}, {"lr", frm_train.lr}, {"seed", frm_train.seed}}},
      {"refl", refl.to_json()},
      {"eval", {{"split", eval.split}}},
      {"stages", stages},
  };
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  Reader top(j, "config");
  top.get("seed", c.seed);
  std::string run_dir = c.run_dir.string();
  top.get("run_dir", run_dir);
  c.run_dir = run_dir;
  top.get("stages", c.stages);

  if (const Json* d = top.section("dataset")) {
    Reader r(*d, "dataset");
    r.get("count", c.dataset.count);
    r.get("size", c.dataset.size);
    if (const Json* f = r.section("fractions")) {
      Reader rf(*f, "dataset.fractions");
      rf.get("train", c.dataset.fractions.train);
      rf.get("val", c.dataset.fractions.val);
      rf.get("test", c.dataset.fractions.test);
      rf.done();
    }
    r.done();
  }
  if (const Json* s = top.section("restorer")) {
    check_known(*s, restorer::RestorerConfig{}.to_json(), "restorer");
    c.restorer = wrap_config("restorer", [&] { return restorer::RestorerConfig::from_json(*s); });
  }
  if (const Json* s = top.section("pretrain")) {
    Reader r(*s, "pretrain");
    r.get("ae_steps", c.pretrain.ae_steps);
    r.get("denoiser_steps", c.pretrain.denoiser_steps);
    r.get("batch_size", c.pretrain.batch_size);
    r.get("ae_lr", c.pretrain.ae_lr);
    r.get("denoiser_lr", c.pretrain.denoiser_lr);
    r.get("adaptation_weight", c.pretrain.adaptation_weight);
    r.get("seed", c.pretrain.seed);
    r.done();
  }
  if (const Json* s = top.section("annotation")) {
    Reader r(*s, "annotation");
    r.get("faces", c.annotation.faces);
    r.get("variants", c.annotation.variants);
    r.get("early_fraction", c.annotation.early_fraction);
    r.get("mid_fraction", c.annotation.mid_fraction);
    r.get("blur_sigma", c.annotation.blur_sigma);
    r.get("human_budget", c.annotation.human_budget);
    r.get("simulate_humans", c.annotation.simulate_humans);
    r.done();
  }
  if (const Json* s = top.section("frm")) {
    Reader r(*s, "frm");
    r.get("embed_dim", c.frm.embed_dim);
    r.get("initial_tau", c.frm.initial_tau);
    r.get("seed", c.frm.seed);
    r.done();
  }
  if (const Json* s = top.section("frm_train")) {
    Reader r(*s, "frm_train");
    r.get("steps", c.frm_train.steps);
    r.get("batch_size", c.frm_train.batch_size);
    r.get("lr", c.frm_train.lr);
    r.get("seed", c.frm_train.seed);
    r.done();
  }
  if (const Json* s = top.section("refl")) {
    // Loss weights default per restorer mode; explicit keys win.
    c.refl = trainer::ReflConfig::from_json(*s, trainer::ReflConfig::defaults_for(c.restorer.mode));
  } else {
    c.refl = trainer::ReflConfig::defaults_for(c.restorer.mode);
  }
  if (const Json* s = top.section("eval")) {
    Reader r(*s, "eval");
    r.get("split", c.eval.split);
    r.done();
  }
  top.done();
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, what);
  };
  check(!run_dir.empty(), "run_dir must not be empty");
  check(dataset.count >= 2, "dataset.count must be >= 2");
  check(dataset.size >= 16 && dataset.size % 16 == 0, "dataset.size must be a positive multiple of 16");
  const auto& f = dataset.fractions;
  check(f.train >= 0 && f.val >= 0 && f.test >= 0 && std::abs(f.train + f.val + f.test - 1.0) <= 1e-9,
        "dataset.fractions must be non-negative and sum to 1");
  restorer.validate();
  check(pretrain.ae_steps >= 0 && pretrain.denoiser_steps >= 0, "pretrain step counts must be >= 0");
  check(pretrain.batch_size >= 1, "pretrain.batch_size must be >= 1");
  check(pretrain.ae_lr > 0 && pretrain.denoiser_lr > 0, "pretrain learning rates must be positive");
  check(annotation.faces >= 1, "annotation.faces must be >= 1");
  check(!annotation.variants.empty(), "annotation.variants must not be empty");
  for (const auto& v : annotation.variants)
    check(v == "early" || v == "mid" || v == "late" || v == "blurred",
          "annotation.variants: unknown variant '" + v + "' (expected early, mid, late or blurred)");
  check(std::set<std::string>(annotation.variants.begin(), annotation.variants.end()).size() ==
            annotation.variants.size(),
        "annotation.variants must not repeat");
  check(annotation.early_fraction > 0 && annotation.early_fraction <= 1 && annotation.mid_fraction > 0 &&
            annotation.mid_fraction <= 1,
        "annotation checkpoint fractions must lie in (0, 1]");
  check(annotation.blur_sigma > 0, "annotation.blur_sigma must be positive");
  check(annotation.human_budget >= 0, "annotation.human_budget must be >= 0");
  check(frm.embed_dim >= 1 && frm.initial_tau >= reward::kMinTau, "bad frm config");
  check(frm_train.steps >= 0 && frm_train.batch_size >= 1 && frm_train.lr > 0, "bad frm_train config");
  refl.validate();
  check(eval.split == "train" || eval.split == "val" || eval.split == "test", "eval.split must be train, val or test");
  for (const auto& s : stages)
    check(std::find(kStages.begin(), kStages.end(), s) != kStages.end(), "unknown stage '" + s + "'");
}

RunConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, "config file " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

Json set_path(Json j, const std::string& dotted, const Json& value) {
  if (dotted.empty()) fail(ErrorCode::kConfig, "empty config key");
  Json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorCode::kConfig, "malformed config key '" + dotted + "'");
    if (!cur->is_object()) *cur = Json::object();
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return j;
    }
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

Json apply_env_overrides(Json j, const std::vector<std::pair<std::string, std::string>>& env) {
  const std::string prefix = "REFL_";
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) continue;
    std::string key;
    const std::string rest = name.substr(prefix.size());
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (rest.compare(i, 2, "__") == 0) {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(rest[i])));
      }
    }
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::exception&) {
      value = raw;
    }
    j = set_path(std::move(j), key, value);
  }
  return j;
}

std::vector<std::pair<std::string, std::string>> refl_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind("REFL_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace refl::orchestrator
