// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <chrono>
#include <thread>

#include "httplib.h"
#include "refl/annotation.hpp"
#include "refl/error.hpp"

namespace refl::annotation {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json error_body(const std::string& msg) { return Json{{"error", msg}}; }

}  // namespace

struct AnnotationServer::Impl {
  PairStore& store;
  std::filesystem::path image_root;
  std::filesystem::path ui_dir;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> stopped{false};

  Impl(PairStore& s, std::filesystem::path images, std::filesystem::path ui)
      : store(s), image_root(std::move(images)), ui_dir(std::move(ui)) {
    server.Get("/api/pairs/next", [this](const httplib::Request&, httplib::Response& res) {
      const auto c = store.next();
      if (!c) {
        res.status = 204;
        return;
      }
      Json body = Json::object();
      body["pair_id"] = c->pair.pair_id;
      body["image_a_url"] = "/images/" + c->pair.image_a_path;
      body["image_b_url"] = "/images/" + c->pair.image_b_path;
      body["attrs"] = dataset::to_json(c->pair.attrs);
      body["lease_expiry"] = c->lease_expiry_ms;
      body["lease_id"] = c->lease_id;
      send_json(res, 200, body);
    });

    server.Post(R"(/api/pairs/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const Json::parse_error&) {
        send_json(res, 400, error_body("body must be JSON"));
        return;
      }
      const std::string choice = body.is_object() ? body.value("choice", std::string()) : std::string();
      if (choice != "a" && choice != "b") {
        send_json(res, 400, error_body("choice must be \"a\" or \"b\""));
        return;
      }
      const std::string lease = body.value("lease_id", std::string());
      const LabelOutcome out = store.label(id, label_from_string(choice), Source::kHuman, lease);
      switch (out) {
        case LabelOutcome::kAccepted:
          send_json(res, 200, Json{{"pair_id", id}, {"label", choice}, {"progress", store.progress().to_json()}});
          return;
        case LabelOutcome::kNotFound:
          send_json(res, 404, error_body(to_string(out)));
          return;
        default:
          send_json(res, 409, error_body(to_string(out)));
      }
    });

    server.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, store.progress().to_json());
    });

    if (!server.set_mount_point("/images", image_root.string()))
      fail(ErrorCode::kIo, "image directory " + image_root.string() + " is not readable");
    if (!ui_dir.empty() && !server.set_mount_point("/", ui_dir.string()))
      fail(ErrorCode::kIo, "UI directory " + ui_dir.string() + " is not readable");
  }
};

AnnotationServer::AnnotationServer(PairStore& store, std::filesystem::path image_root, std::filesystem::path ui_dir)
    : impl_(std::make_unique<Impl>(store, std::move(image_root), std::move(ui_dir))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
  if (impl_->thread.joinable()) fail(ErrorCode::kState, "annotation server already running");
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port
  // and split the lease state. Plain SO_REUSEADDR makes the second bind fail.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ < 0) fail(ErrorCode::kIo, "cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port))
      fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    port_ = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->store.flush();
  impl_->stopped = true;
}

void AnnotationServer::wait() {
  while (!impl_->stopped) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

}  // namespace refl::annotation
