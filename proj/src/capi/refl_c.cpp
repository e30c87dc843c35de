// SPDX-License-Identifier: Apache-2.0
#include "refl.h"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <future>
#include <string>
#include <thread>

#include "refl/error.hpp"
#include "refl/eval.hpp"
#include "refl/metrics.hpp"
#include "refl/orchestrator.hpp"

using refl::Json;
namespace orch = refl::orchestrator;

struct refl_run {
  Json config;  // source of truth; re-validated on every change
  orch::RunConfig parsed;
  refl_log_fn log = nullptr;
  void* log_user = nullptr;
};

struct refl_server {
  std::atomic<bool> stop{false};
  std::thread thread;
  std::exception_ptr error;
  bool stopped = false;
};

namespace {

thread_local std::string g_last_error;

refl_status to_status(refl::ErrorCode c) { return static_cast<refl_status>(static_cast<int>(c)); }

// Runs f, mapping exceptions onto status codes and the thread's error message.
template <class F>
refl_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return REFL_OK;
  } catch (const refl::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const Json::exception& e) {
    g_last_error = e.what();
    return REFL_ERR_INVALID_ARGUMENT;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return REFL_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return REFL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return REFL_ERR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

void need(const void* p, const char* what) {
  if (!p) refl::fail(refl::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

const char* outcome_token(refl::annotation::LabelOutcome o) {
  using refl::annotation::LabelOutcome;
  switch (o) {
    case LabelOutcome::kAccepted:
      return "accepted";
    case LabelOutcome::kAlreadyLabeled:
      return "already_labeled";
    case LabelOutcome::kStaleLease:
      return "stale_lease";
    case LabelOutcome::kLeasedElsewhere:
      return "leased_elsewhere";
    case LabelOutcome::kNotFound:
      return "not_found";
    default:
      return "not_eligible";
  }
}

orch::Logger logger_of(const refl_run* run) {
  if (!run->log) return nullptr;
  return [fn = run->log, user = run->log_user](const std::string& m) { fn(m.c_str(), user); };
}

}  // namespace

extern "C" {

const char* refl_version(void) { return "0.1.0"; }

const char* refl_last_error(void) { return g_last_error.c_str(); }

const char* refl_status_name(refl_status status) {
  switch (status) {
    case REFL_OK:
      return "ok";
    case REFL_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case REFL_ERR_CONFIG:
      return "config";
    case REFL_ERR_DEPENDENCY:
      return "dependency";
    case REFL_ERR_IO:
      return "io";
    case REFL_ERR_STATE:
      return "state";
    case REFL_ERR_CONFLICT:
      return "conflict";
    case REFL_ERR_NOT_FOUND:
      return "not_found";
    default:
      return "internal";
  }
}

void refl_string_free(char* s) { std::free(s); }

refl_status refl_run_create(const char* config_path, int apply_env, refl_run** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    Json j = orch::RunConfig{}.to_json();
    if (config_path) {
      const Json file = orch::load_config(config_path).to_json();
      j = file;
    }
    if (apply_env) j = orch::apply_env_overrides(j, orch::refl_environment());
    auto run = std::make_unique<refl_run>();
    run->parsed = orch::RunConfig::from_json(j);
    run->config = run->parsed.to_json();
    *out = run.release();
  });
}

void refl_run_destroy(refl_run* run) { delete run; }

refl_status refl_run_set(refl_run* run, const char* key, const char* json_value) {
  return guarded([&] {
    need(run, "run");
    need(key, "key");
    need(json_value, "value");
    Json value;
    try {
      value = Json::parse(json_value);
    } catch (const Json::exception&) {
      value = std::string(json_value);
    }
    Json next = orch::set_path(run->config, key, value);
    run->parsed = orch::RunConfig::from_json(next);
    run->config = run->parsed.to_json();
  });
}

refl_status refl_run_config(const refl_run* run, char** out_json) {
  return guarded([&] {
    need(run, "run");
    need(out_json, "out_json");
    put(out_json, run->config.dump(2));
  });
}

refl_status refl_run_set_logger(refl_run* run, refl_log_fn fn, void* user) {
  return guarded([&] {
    need(run, "run");
    run->log = fn;
    run->log_user = user;
  });
}

refl_status refl_run_stages(refl_run* run, const char* const* stages, size_t count, int force, char** out_json) {
  return guarded([&] {
    need(run, "run");
    std::vector<std::string> names;
    for (size_t i = 0; i < count; ++i) {
      need(stages[i], "stage name");
      names.emplace_back(stages[i]);
    }
    orch::PipelineOptions opt;
    opt.force = force != 0;
    opt.log = logger_of(run);
    const auto results = orch::run_pipeline(run->parsed, names, opt);
    Json j = Json::array();
    for (const auto& r : results)
      j.push_back({{"stage", r.stage}, {"skipped", r.skipped}, {"fingerprint", r.fingerprint}, {"summary", r.summary}});
    put(out_json, j.dump(2));
  });
}

refl_status refl_label(refl_run* run, const char* pair_id, const char* choice, char** out_outcome) {
  return guarded([&] {
    need(run, "run");
    need(pair_id, "pair_id");
    need(choice, "choice");
    put(out_outcome, outcome_token(orch::label_pair(run->parsed, pair_id, choice)));
  });
}

refl_status refl_server_start(refl_run* run, const char* host, int port, const char* ui_dir, refl_server** out,
                              int* bound_port) {
  return guarded([&] {
    need(run, "run");
    need(out, "out");
    *out = nullptr;
    auto server = std::make_unique<refl_server>();
    auto ready = std::make_shared<std::promise<int>>();
    auto fut = ready->get_future();
    const orch::RunConfig cfg = run->parsed;
    const std::string h = host ? host : "127.0.0.1";
    const std::filesystem::path ui = ui_dir ? ui_dir : "";
    refl_server* raw = server.get();
    server->thread = std::thread([raw, ready, cfg, h, port, ui] {
      bool announced = false;
      try {
        orch::serve_annotation(cfg, h, port, ui, raw->stop, [&](int p) {
          announced = true;
          ready->set_value(p);
        });
      } catch (...) {
        if (!announced)
          ready->set_exception(std::current_exception());
        else
          raw->error = std::current_exception();
      }
    });
    int p = 0;
    try {
      p = fut.get();
    } catch (...) {
      server->thread.join();
      throw;
    }
    if (bound_port) *bound_port = p;
    *out = server.release();
  });
}

refl_status refl_server_stop(refl_server* server) {
  return guarded([&] {
    need(server, "server");
    if (server->stopped) return;
    server->stop = true;
    if (server->thread.joinable()) server->thread.join();
    server->stopped = true;
    if (server->error) std::rethrow_exception(server->error);
  });
}

void refl_server_destroy(refl_server* server) {
  if (!server) return;
  refl_server_stop(server);
  delete server;
}

refl_status refl_hacking_probe(refl_run* run, const char* restorer_ckpt, const char* frm_ckpt, char** out_json) {
  return guarded([&] {
    need(run, "run");
    need(restorer_ckpt, "restorer_ckpt");
    need(frm_ckpt, "frm_ckpt");
    put(out_json, orch::hacking_probe(run->parsed, restorer_ckpt, frm_ckpt).to_json().dump(2));
  });
}

refl_status refl_compare_reports(const char* report_a, const char* report_b, char** out_json) {
  return guarded([&] {
    need(report_a, "report_a");
    need(report_b, "report_b");
    const auto a = refl::eval::load_report(report_a);
    const auto b = refl::eval::load_report(report_b);
    put(out_json, refl::eval::to_json(refl::eval::compare(a, b)).dump(2));
  });
}

refl_status refl_image_metrics(const char* image_path, const char* ref_path, char** out_json) {
  return guarded([&] {
    need(image_path, "image_path");
    need(ref_path, "ref_path");
    const auto m = refl::metrics::image_metrics(refl::load_png(image_path), refl::load_png(ref_path));
    Json j = Json::object();
    const auto v = m.values();
    for (std::size_t k = 0; k < v.size(); ++k) j[refl::metrics::kMetricNames[k]] = v[k];
    put(out_json, j.dump(2));
  });
}

refl_status refl_naturalness_reference(int count, uint64_t seed, char** out_json) {
  return guarded([&] {
    const auto ref = refl::metrics::compute_naturalness_reference(count, seed);
    put(out_json, Json(std::vector<double>(ref.begin(), ref.end())).dump());
  });
}

}  // extern "C"
