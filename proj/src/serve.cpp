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

#include "hsfuse/serve.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "hsfuse/data.hpp"
#include "hsfuse/errors.hpp"
#include "hsfuse/hash.hpp"
#include "httplib.h"
#include "json.hpp"

namespace hsfuse {

using nlohmann::json;
using nlohmann::ordered_json;

std::string checkpoint_checksum(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// ---------------------------------------------------------------------------
// FeedbackLog

FeedbackLog::FeedbackLog(std::filesystem::path path) : path_(std::move(path)) {
  std::ofstream probe(path_, std::ios::app);
  if (!probe) throw IoError("cannot open feedback log " + path_.string());
  writer_ = std::thread([this] { run(); });
}

FeedbackLog::~FeedbackLog() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  writer_.join();
}

void FeedbackLog::append(std::string line) {
  std::future<void> done;
  {
    std::lock_guard lock(mu_);
    if (stopping_) throw IoError("feedback log is closed");
    queue_.emplace_back(std::move(line), std::promise<void>{});
    done = queue_.back().second.get_future();
  }
  cv_.notify_one();
  done.get();
}

void FeedbackLog::run() {
  std::ofstream out(path_, std::ios::app);
  while (true) {
    std::pair<std::string, std::promise<void>> item;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
    }
    out << item.first << '\n';
    out.flush();
    if (out) {
      item.second.set_value();
    } else {
      item.second.set_exception(
          std::make_exception_ptr(IoError("write to feedback log " + path_.string() + " failed")));
      out.clear();
    }
  }
}

// ---------------------------------------------------------------------------
// RequestWindow

std::string RequestWindow::issue() {
  std::lock_guard lock(mu_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "req-%08llu", static_cast<unsigned long long>(next_++));
  std::string id = buf;
  order_.push_back(id);
  ids_.insert(id);
  while (order_.size() > capacity_) {
    ids_.erase(order_.front());
    order_.pop_front();
  }
  return id;
}

bool RequestWindow::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return ids_.contains(id);
}

// ---------------------------------------------------------------------------
// ServeApp

namespace {

HttpReply json_reply(int status, const ordered_json& body) { return {status, body.dump(), "application/json"}; }

HttpReply error_reply(int status, const std::string& message, const std::string& field = {}) {
  ordered_json body;
  body["error"] = message;
  if (!field.empty()) body["field"] = field;
  return json_reply(status, body);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms.count()));
  return out;
}

// A 400 that names the offending field.
struct BadRequest {
  std::string message;
  std::string field;
};

}  // namespace

ServeApp::ServeApp(ServeOptions options)
    : options_(std::move(options)), window_(options_.request_window) {
  if (!options_.feedback_log.empty()) log_ = std::make_unique<FeedbackLog>(options_.feedback_log);
}

void ServeApp::load_model(const std::filesystem::path& checkpoint_path) {
  const std::string bytes = read_file(checkpoint_path);
  set_model(parse_checkpoint(bytes), checkpoint_checksum(bytes));
}

void ServeApp::set_model(Checkpoint ckpt, std::string checksum) {
  auto loaded = std::make_shared<const Loaded>(Loaded{std::move(ckpt), std::move(checksum)});
  std::lock_guard lock(model_mu_);
  model_ = std::move(loaded);
}

bool ServeApp::has_model() const { return model() != nullptr; }

std::shared_ptr<const ServeApp::Loaded> ServeApp::model() const {
  std::lock_guard lock(model_mu_);
  return model_;
}

HttpReply ServeApp::handle_predict(std::string_view body) {
  const auto loaded = model();
  if (!loaded) return error_reply(503, "model not loaded");
  const ModelConfig& cfg = loaded->ckpt.config;

  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");

  try {
    std::size_t k = 5;
    if (const auto it = req.find("k"); it != req.end() && !it->is_null()) {
      if (!it->is_number_integer() || it->get<long long>() < 1) {
        throw BadRequest{"k must be a positive integer", "k"};
      }
      k = it->get<std::size_t>();
    }

    const json* embeddings = nullptr;
    if (const auto it = req.find("embeddings"); it != req.end() && !it->is_null()) {
      if (!it->is_object()) throw BadRequest{"embeddings must be an object", "embeddings"};
      embeddings = &*it;
    }

    std::vector<ModalityVector> sample;
    for (const auto& spec : cfg.modalities) {
      const std::string name(modality_name(spec.modality));
      if (embeddings != nullptr && embeddings->contains(name)) {
        const auto& values = (*embeddings)[name];
        if (!values.is_array()) throw BadRequest{"embeddings." + name + " must be an array", name};
        std::vector<double> v;
        for (const auto& x : values) {
          if (!x.is_number() || !std::isfinite(x.get<double>())) {
            throw BadRequest{"embeddings." + name + " must hold finite numbers", name};
          }
          v.push_back(x.get<double>());
        }
        if (v.size() != spec.dim) {
          throw BadRequest{"embeddings." + name + " has " + std::to_string(v.size()) +
                               " values, model expects " + std::to_string(spec.dim),
                           name};
        }
        sample.push_back({spec.modality, Vec(std::move(v))});
        continue;
      }
      const std::string field(modality_text_field(spec.modality));
      std::string text;
      if (!field.empty()) {
        if (const auto it = req.find(field); it != req.end() && !it->is_null()) {
          if (!it->is_string()) throw BadRequest{field + " must be a string", field};
          text = it->get<std::string>();
        }
      }
      if (!spec.derives_from_text() || text.empty() || field.empty()) {
        throw BadRequest{"missing modality " + name +
                             (spec.derives_from_text() ? " (send '" + field + "' or embeddings." + name + ")"
                                                       : " (send embeddings." + name + ")"),
                         name};
      }
      const std::string prepared =
          options_.dict ? preprocess_text(text, *options_.dict) : clean_text(text);
      if (const auto* hash = std::get_if<HashSource>(&spec.source)) {
        sample.push_back({spec.modality, hash_encode(tokenize(prepared), spec.dim, hash->seed)});
      } else {
        const auto& remote = std::get<RemoteSource>(spec.source);
        auto table = fetch_remote_embeddings(remote.endpoint, spec.modality, spec.dim,
                                             {{"q", prepared}}, options_.remote);
        sample.push_back({spec.modality, *table.find("q")});
      }
    }

    const auto preds = predict_topk(loaded->ckpt.params, cfg, sample, k, loaded->ckpt.vocab);
    ordered_json out;
    out["request_id"] = window_.issue();
    out["predictions"] = ordered_json::array();
    std::size_t rank = 1;
    for (const auto& p : preds) {
      out["predictions"].push_back({{"rank", rank++},
                                    {"hs6", p.hs6},
                                    {"hs4", p.hs6.substr(0, 4)},
                                    {"hs2", p.hs6.substr(0, 2)},
                                    {"prob", p.prob}});
    }
    return json_reply(200, out);
  } catch (const BadRequest& e) {
    return error_reply(400, e.message, e.field);
  } catch (const TransportError& e) {
    return error_reply(502, e.what());
  } catch (const ContractError& e) {
    return error_reply(502, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, std::string("prediction failed: ") + e.what());
  }
}

HttpReply ServeApp::handle_feedback(std::string_view body) {
  const auto loaded = model();
  if (!loaded) return error_reply(503, "model not loaded");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
  const auto id_it = req.find("request_id");
  if (id_it == req.end() || !id_it->is_string()) {
    return error_reply(400, "request_id must be a string", "request_id");
  }
  const auto hs6_it = req.find("hs6");
  if (hs6_it == req.end() || !hs6_it->is_string()) return error_reply(400, "hs6 must be a string", "hs6");
  const auto request_id = id_it->get<std::string>();
  const auto hs6 = hs6_it->get<std::string>();

  if (!window_.contains(request_id)) {
    return error_reply(404, "unknown or expired request id '" + request_id + "'", "request_id");
  }
  if (!loaded->ckpt.vocab.index_of(hs6)) {
    return error_reply(400, "hs6 '" + hs6 + "' is not in the model vocabulary", "hs6");
  }

  ordered_json entry;
  entry["request_id"] = request_id;
  entry["hs6"] = hs6;
  entry["timestamp"] = utc_timestamp();
  try {
    if (log_) log_->append(entry.dump());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
  ordered_json out;
  out["status"] = "recorded";
  out["request_id"] = request_id;
  out["hs6"] = hs6;
  out["logged"] = log_ != nullptr;
  return json_reply(200, out);
}

HttpReply ServeApp::handle_health() const {
  const auto loaded = model();
  if (!loaded) return error_reply(503, "model not loaded");
  ordered_json out;
  out["status"] = "ok";
  out["checksum"] = loaded->checksum;
  out["vocab_size"] = loaded->ckpt.vocab.size();
  out["fusion"] = std::string(fusion_name(loaded->ckpt.config.fusion));
  out["modalities"] = ordered_json::array();
  for (const auto& spec : loaded->ckpt.config.modalities) {
    out["modalities"].push_back({{"name", std::string(modality_name(spec.modality))},
                                 {"dim", spec.dim},
                                 {"text_field", std::string(modality_text_field(spec.modality))},
                                 {"from_text", spec.derives_from_text()}});
  }
  return json_reply(200, out);
}

HttpReply ServeApp::handle_labels() const {
  const auto loaded = model();
  if (!loaded) return error_reply(503, "model not loaded");
  ordered_json out;
  out["labels"] = ordered_json::array();
  const auto& vocab = loaded->ckpt.vocab;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto& code = vocab.code(i);
    out["labels"].push_back(
        {{"index", i}, {"hs6", code}, {"hs4", code.substr(0, 4)}, {"hs2", code.substr(0, 2)}});
  }
  return json_reply(200, out);
}

// ---------------------------------------------------------------------------
// HttpServer

HttpServer::HttpServer(ServeApp& app) : app_(app), server_(std::make_unique<httplib::Server>()) {
  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body, reply.content_type);
  };
  server_->Post("/api/predict", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, app_.handle_predict(req.body));
  });
  server_->Post("/api/feedback", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, app_.handle_feedback(req.body));
  });
  server_->Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, app_.handle_health());
  });
  server_->Get("/api/labels", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, app_.handle_labels());
  });
  if (!app_.options().static_dir.empty()) {
    if (!server_->set_mount_point("/", app_.options().static_dir.string())) {
      throw IoError("static directory " + app_.options().static_dir.string() + " does not exist");
    }
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw IoError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

}  // namespace hsfuse
