// Copyright 2026 The hsfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>

#include "hsfuse/encoding.hpp"
#include "hsfuse/model.hpp"
#include "hsfuse/textprep.hpp"

namespace httplib {
class Server;
}

namespace hsfuse {

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Append-only JSON-lines file fed by one writer thread. append() returns
/// once the line has been written and flushed.
class FeedbackLog {
 public:
  explicit FeedbackLog(std::filesystem::path path);
  ~FeedbackLog();
  FeedbackLog(const FeedbackLog&) = delete;
  FeedbackLog& operator=(const FeedbackLog&) = delete;

  void append(std::string line);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void run();

  std::filesystem::path path_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::pair<std::string, std::promise<void>>> queue_;
  bool stopping_ = false;
  std::thread writer_;
};

/// Bounded FIFO set of issued request ids.
class RequestWindow {
 public:
  explicit RequestWindow(std::size_t capacity) : capacity_(capacity) {}
  std::string issue();
  bool contains(const std::string& id) const;

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::uint64_t next_ = 1;
  std::deque<std::string> order_;
  std::unordered_set<std::string> ids_;
};

struct ServeOptions {
  std::filesystem::path feedback_log;  // empty: feedback is acknowledged, not stored
  std::filesystem::path static_dir;    // empty: no UI files
  std::size_t request_window = 10'000;
  std::optional<FreqDict> dict;        // text preprocessing; clean_text only if absent
  RemoteOptions remote;
};

/// Request handlers over an immutable loaded model. Transport-independent;
/// HttpServer binds them to routes.
class ServeApp {
 public:
  explicit ServeApp(ServeOptions options = {});

  void load_model(const std::filesystem::path& checkpoint_path);
  void set_model(Checkpoint ckpt, std::string checksum);
  bool has_model() const;

  HttpReply handle_predict(std::string_view body);
  HttpReply handle_feedback(std::string_view body);
  HttpReply handle_health() const;
  HttpReply handle_labels() const;

  const ServeOptions& options() const noexcept { return options_; }

 private:
  struct Loaded {
    Checkpoint ckpt;
    std::string checksum;
  };
  std::shared_ptr<const Loaded> model() const;

  ServeOptions options_;
  mutable std::mutex model_mu_;
  std::shared_ptr<const Loaded> model_;
  RequestWindow window_;
  std::unique_ptr<FeedbackLog> log_;
};

/// httplib front end: POST /api/predict, POST /api/feedback, GET /api/health,
/// GET /api/labels, static files from ServeOptions::static_dir.
class HttpServer {
 public:
  explicit HttpServer(ServeApp& app);
  ~HttpServer();

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();

 private:
  ServeApp& app_;
  std::unique_ptr<httplib::Server> server_;
};

/// FNV-1a of the checkpoint bytes, hex.
std::string checkpoint_checksum(std::string_view bytes);

}  // namespace hsfuse
