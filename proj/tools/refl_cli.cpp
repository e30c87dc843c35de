// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through refl.h.
#include <chrono>
#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "refl.h"

namespace {

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

// Exit codes: 0 ok, 2 config or usage error, 3 missing upstream artifact, 1 anything else.
int exit_code(refl_status s) {
  switch (s) {
    case REFL_OK:
      return 0;
    case REFL_ERR_CONFIG:
      return 2;
    case REFL_ERR_DEPENDENCY:
      return 3;
    default:
      return 1;
  }
}

int report(refl_status s) {
  if (s != REFL_OK) std::fprintf(stderr, "error (%s): %s\n", refl_status_name(s), refl_last_error());
  return exit_code(s);
}

void print_and_free(char* s) {
  if (!s) return;
  std::printf("%s\n", s);
  refl_string_free(s);
}

void log_to_stderr(const char* msg, void*) { std::fprintf(stderr, "[refl] %s\n", msg); }

struct Globals {
  std::string config;
  std::string run_dir;
  long long seed = -1;
  std::vector<std::string> sets;
  bool quiet = false;
};

// Config file, then REFL_* environment, then command-line flags.
refl_status open_run(const Globals& g, refl_run** run) {
  refl_status s = refl_run_create(g.config.empty() ? nullptr : g.config.c_str(), 1, run);
  if (s != REFL_OK) return s;
  if (!g.run_dir.empty()) {
    const std::string quoted = "\"" + g.run_dir + "\"";
    if ((s = refl_run_set(*run, "run_dir", quoted.c_str())) != REFL_OK) return s;
  }
  if (g.seed >= 0 && (s = refl_run_set(*run, "seed", std::to_string(g.seed).c_str())) != REFL_OK) return s;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
      return REFL_ERR_CONFIG;
    }
    if ((s = refl_run_set(*run, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != REFL_OK) return s;
  }
  if (!g.quiet) refl_run_set_logger(*run, log_to_stderr, nullptr);
  return REFL_OK;
}

struct RunGuard {
  refl_run* run = nullptr;
  ~RunGuard() { refl_run_destroy(run); }
};

int run_stages(const Globals& g, const std::vector<std::string>& stages, bool force) {
  RunGuard rg;
  refl_status s = open_run(g, &rg.run);
  if (s != REFL_OK) return report(s);
  std::vector<const char*> names;
  for (const auto& n : stages) names.push_back(n.c_str());
  char* out = nullptr;
  s = refl_run_stages(rg.run, names.data(), names.size(), force ? 1 : 0, &out);
  print_and_free(out);
  return report(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward feedback learning for blind face restoration"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Globals g;
  app.add_option("-c,--config", g.config, "JSON run configuration");
  app.add_option("--run-dir", g.run_dir, "Run directory (overrides the config)");
  app.add_option("--seed", g.seed, "Global seed (overrides the config)");
  app.add_option("--set", g.sets, "Override a config key, e.g. --set refl.iterations=50");
  app.add_flag("-q,--quiet", g.quiet, "No progress messages");

  bool force = false;
  const std::vector<std::pair<std::string, std::string>> stage_cmds = {
      {"dataset", "Render synthetic faces and the manifest"},
      {"degrade", "Degrade every face (blur, downsample, noise, JPEG)"},
      {"pretrain", "Pretrain the autoencoder and denoiser"},
      {"restore-variants", "Restore annotation faces with several checkpoints and build pairs"},
      {"train-svm", "Hybrid labeling: fixed rule, human labels, SVM for the rest"},
      {"train-frm", "Train the face reward model on the preference pairs"},
      {"refl-train", "Fine-tune the restorer with reward feedback"},
      {"eval", "Evaluate the pretrained and fine-tuned restorers"}};
  std::vector<std::pair<CLI::App*, std::string>> stage_apps;
  for (const auto& [name, help] : stage_cmds) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_flag("--force", force, "Rerun even when inputs are unchanged");
    stage_apps.emplace_back(sc, name);
  }
  // refl-train exposes every training field as a flag (shorthand for --set refl.<field>=...).
  const std::vector<std::pair<std::string, std::string>> refl_fields = {
      {"lambda_reward", "Weight of the reward loss"},
      {"lambda_lpips", "Weight of the perceptual loss"},
      {"lambda_dwt", "Weight of the low-frequency wavelet loss"},
      {"lambda_reg", "Weight of the weight regularizer"},
      {"truncation", "Final denoising steps that carry gradients"},
      {"frm_update_every", "Reward model update cadence n"},
      {"lr", "Restorer learning rate"},
      {"iterations", "Training iterations"},
      {"batch_size", "Restorer batch size"},
      {"frm_batch_size", "Reward model update batch size"},
      {"frm_lr", "Reward model update learning rate"},
      {"seed", "Training seed"},
      {"ru_enabled", "Dynamic reward model updates (true or false)"},
      {"checkpoint_every", "Save checkpoints every k iterations (0 = never)"}};
  std::map<std::string, std::string> refl_values;
  CLI::App* refl_cmd = stage_apps[6].first;
  for (const auto& [field, help] : refl_fields) {
    std::string flag = field == "seed" ? "refl-seed" : field;
    std::replace(flag.begin(), flag.end(), '_', '-');
    refl_cmd->add_option("--" + flag, refl_values[field], help);
  }

  auto* run_cmd = app.add_subcommand("run", "Run several stages (all configured stages by default)");
  std::vector<std::string> run_stage_list;
  run_cmd->add_option("--stages", run_stage_list, "Stages to run")->delimiter(',');
  run_cmd->add_flag("--force", force, "Rerun even when inputs are unchanged");

  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration");

  auto* serve_cmd = app.add_subcommand("annotate-serve", "Serve the annotation API for the run");
  std::string host = "127.0.0.1", ui_dir;
  int port = 8080;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
  serve_cmd->add_option("--ui-dir", ui_dir, "Static UI bundle to serve at /");

  auto* label_cmd = app.add_subcommand("label", "Record one human preference label");
  std::string pair_id, choice;
  label_cmd->add_option("--pair-id", pair_id, "Pair id")->required();
  label_cmd->add_option("--choice", choice, "Preferred image")->required()->check(CLI::IsMember({"a", "b"}));

  auto* compare_cmd = app.add_subcommand("compare", "Per-metric deltas between two eval reports (positive: b better)");
  std::string report_a, report_b;
  compare_cmd->add_option("report_a", report_a, "Baseline report.json")->required();
  compare_cmd->add_option("report_b", report_b, "Candidate report.json")->required();

  auto* probe_cmd = app.add_subcommand("hacking-probe", "Reward/quality gap and diversity of a restorer");
  std::string probe_restorer, probe_frm;
  probe_cmd->add_option("--restorer", probe_restorer, "Restorer checkpoint (default: run's restorer_refl)");
  probe_cmd->add_option("--frm", probe_frm, "Reward model checkpoint (default: run's frm)");

  auto* metrics_cmd = app.add_subcommand("metrics", "Per-image metric CSV against references");
  std::string image, ref, image_dir, ref_dir;
  metrics_cmd->add_option("image", image, "PNG to score");
  metrics_cmd->add_option("reference", ref, "Reference PNG");
  metrics_cmd->add_option("--dir", image_dir, "Score every PNG in this directory");
  metrics_cmd->add_option("--ref-dir", ref_dir, "References with the same file names");

  auto* natref_cmd = app.add_subcommand("naturalness-ref", "Recompute the naturalness reference histogram");
  int nat_count = 256;
  std::uint64_t nat_seed = 20240601;
  std::string nat_format = "json";
  natref_cmd->add_option("--count", nat_count, "Number of clean faces");
  natref_cmd->add_option("--seed", nat_seed, "Face seed");
  natref_cmd->add_option("--format", nat_format, "json or inc")->check(CLI::IsMember({"json", "inc"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [field, value] : refl_values)
    if (!value.empty()) g.sets.push_back("refl." + field + "=" + value);
  for (const auto& [sc, name] : stage_apps)
    if (sc->parsed()) return run_stages(g, {name}, force);
  if (run_cmd->parsed()) return run_stages(g, run_stage_list, force);

  if (config_cmd->parsed()) {
    RunGuard rg;
    refl_status s = open_run(g, &rg.run);
    char* out = nullptr;
    if (s == REFL_OK) s = refl_run_config(rg.run, &out);
    print_and_free(out);
    return report(s);
  }

  if (serve_cmd->parsed()) {
    RunGuard rg;
    refl_status s = open_run(g, &rg.run);
    if (s != REFL_OK) return report(s);
    refl_server* server = nullptr;
    int bound = 0;
    s = refl_server_start(rg.run, host.c_str(), port, ui_dir.empty() ? nullptr : ui_dir.c_str(), &server, &bound);
    if (s != REFL_OK) return report(s);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::fprintf(stderr, "[refl] annotation service on http://%s:%d (Ctrl-C to stop)\n", host.c_str(), bound);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    s = refl_server_stop(server);
    refl_server_destroy(server);
    std::fprintf(stderr, "[refl] stopped, label log flushed\n");
    return report(s);
  }

  if (label_cmd->parsed()) {
    RunGuard rg;
    refl_status s = open_run(g, &rg.run);
    if (s != REFL_OK) return report(s);
    char* outcome = nullptr;
    s = refl_label(rg.run, pair_id.c_str(), choice.c_str(), &outcome);
    if (s != REFL_OK) return report(s);
    const std::string o = outcome;
    print_and_free(outcome);
    return o == "accepted" ? 0 : 1;
  }

  if (compare_cmd->parsed()) {
    char* out = nullptr;
    const refl_status s = refl_compare_reports(report_a.c_str(), report_b.c_str(), &out);
    print_and_free(out);
    return report(s);
  }

  if (probe_cmd->parsed()) {
    RunGuard rg;
    refl_status s = open_run(g, &rg.run);
    if (s != REFL_OK) return report(s);
    char* cfg = nullptr;
    if ((s = refl_run_config(rg.run, &cfg)) != REFL_OK) return report(s);
    // Defaults live under the resolved run directory.
    const std::string run_dir = nlohmann::json::parse(cfg)["run_dir"].get<std::string>();
    refl_string_free(cfg);
    if (probe_restorer.empty()) probe_restorer = run_dir + "/checkpoints/restorer_refl.ckpt";
    if (probe_frm.empty()) probe_frm = run_dir + "/checkpoints/frm.ckpt";
    char* out = nullptr;
    s = refl_hacking_probe(rg.run, probe_restorer.c_str(), probe_frm.c_str(), &out);
    print_and_free(out);
    return report(s);
  }

  if (metrics_cmd->parsed()) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, std::string>> jobs;
    if (!image_dir.empty() || !ref_dir.empty()) {
      if (image_dir.empty() || ref_dir.empty() || !image.empty()) {
        std::fprintf(stderr, "metrics: give either IMAGE REFERENCE or --dir with --ref-dir\n");
        return 2;
      }
      std::error_code ec;
      for (const auto& e : fs::directory_iterator(image_dir, ec))
        if (e.path().extension() == ".png") jobs.emplace_back(e.path().string(), (fs::path(ref_dir) / e.path().filename()).string());
      if (ec) {
        std::fprintf(stderr, "metrics: cannot list %s: %s\n", image_dir.c_str(), ec.message().c_str());
        return 1;
      }
      std::sort(jobs.begin(), jobs.end());
    } else {
      if (image.empty() || ref.empty()) {
        std::fprintf(stderr, "metrics: give either IMAGE REFERENCE or --dir with --ref-dir\n");
        return 2;
      }
      jobs.emplace_back(image, ref);
    }
    bool header = false;
    for (const auto& [img, reference] : jobs) {
      char* out = nullptr;
      const refl_status s = refl_image_metrics(img.c_str(), reference.c_str(), &out);
      if (s != REFL_OK) return report(s);
      const auto row = nlohmann::ordered_json::parse(out);
      refl_string_free(out);
      if (!header) {
        std::printf("image");
        for (const auto& [k, v] : row.items()) std::printf(",%s", k.c_str());
        std::printf("\n");
        header = true;
      }
      std::printf("%s", img.c_str());
      for (const auto& [k, v] : row.items()) std::printf(",%.17g", v.get<double>());
      std::printf("\n");
    }
    return 0;
  }

  if (natref_cmd->parsed()) {
    char* out = nullptr;
    const refl_status s = refl_naturalness_reference(nat_count, nat_seed, &out);
    if (s != REFL_OK) return report(s);
    std::string text = out;
    refl_string_free(out);
    if (nat_format == "json") {
      std::printf("%s\n", text.c_str());
      return 0;
    }
    // C initializer body, four values per line.
    text = text.substr(1, text.size() - 2);
    std::printf("// SPDX-License-Identifier: Apache-2.0\n// Generated by tools/gen_naturalness_reference.sh; do not edit.\n");
    std::size_t pos = 0;
    int col = 0;
    while (pos < text.size()) {
      const auto comma = text.find(',', pos);
      const std::string v = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      std::printf("%s%s", v.c_str(), comma == std::string::npos ? "\n" : (++col % 4 == 0 ? ",\n" : ", "));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return 0;
  }
  return 2;
}
