// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "paramstyle/inversion.hpp"
#include "paramstyle/model.hpp"

namespace httplib {
class Server;
}

namespace paramstyle {

enum class JobState { kQueued, kRunning, kDone, kFailed };
std::string to_string(JobState state);

struct Job {
  std::string id;
  std::string kind;  // generate | edit | invert | sweep
  std::string model;
  nlohmann::json request;
  JobState state = JobState::kQueued;
  nlohmann::json result;  // set once done
  nlohmann::json error;   // {code, message} once failed
  std::chrono::system_clock::time_point created, started, finished;

  nlohmann::json to_json() const;
};

struct ModelSpec {
  std::string name;
  std::filesystem::path bundle;
  std::filesystem::path adapter;  // optional
};

// Parses "name=bundle.ckpt[,adapter.ckpt]".
ModelSpec parse_model_spec(const std::string& text);

// Typed request failure mapped onto an HTTP status and {code, message}.
struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

// Job queue, model registry and inversion cache behind the REST API. Each
// model owns one worker thread, so inference on a bundle is serialized and
// FIFO; request handlers only validate and enqueue.
class EditService {
 public:
  static constexpr std::size_t kQueueCapacity = 64;

  explicit EditService(std::size_t queue_capacity = kQueueCapacity);
  ~EditService();
  EditService(const EditService&) = delete;
  EditService& operator=(const EditService&) = delete;

  // Loads and verifies a bundle (and adapter); throws on fingerprint mismatch.
  void add_model(const ModelSpec& spec);
  // Registers an already loaded model (used by tests).
  void add_model(const std::string& name, StyleModel model, const std::string& bundle_path = "");

  nlohmann::json list_models() const;

  // Validates and enqueues; returns the queued job. Throws ApiError.
  Job submit(const std::string& kind, const nlohmann::json& request);
  std::optional<Job> job(const std::string& id) const;
  // Blocks until the job leaves the queue/running states (test helper).
  std::optional<Job> wait(const std::string& id, std::chrono::milliseconds timeout) const;

  // Pauses or resumes every worker (jobs stay queued while paused).
  void set_paused(bool paused);

  // Installs the /api routes on `server`.
  void install_routes(httplib::Server& server);

  void shutdown();

 private:
  struct Entry;
  struct CachedInversion {
    InversionRecord record;
    std::string model;
    nlohmann::json reconstruction;  // {png, psnr}
  };

  Entry& entry_for(const std::string& model);
  void worker_loop(Entry* entry);
  nlohmann::json run_job(Entry& entry, const Job& job);
  nlohmann::json run_generate(Entry& entry, const nlohmann::json& req);
  nlohmann::json run_edit(Entry& entry, const nlohmann::json& req);
  nlohmann::json run_invert(Entry& entry, const nlohmann::json& req);
  nlohmann::json run_sweep(Entry& entry, const nlohmann::json& req);
  void validate(const std::string& kind, Entry& entry, const nlohmann::json& req);
  void update(const std::string& id, const std::function<void(Job&)>& fn);

  std::size_t capacity_;
  std::map<std::string, std::unique_ptr<Entry>> models_;
  mutable std::shared_mutex models_mutex_;

  std::map<std::string, Job> jobs_;
  mutable std::shared_mutex jobs_mutex_;
  mutable std::condition_variable_any jobs_changed_;
  std::uint64_t next_job_ = 1;

  std::mutex queue_mutex_;  // guards every entry's queue and the pending count
  std::condition_variable queue_cv_;
  std::size_t pending_ = 0;
  bool paused_ = false;
  bool stopping_ = false;

  std::map<std::string, CachedInversion> inversions_;
  mutable std::shared_mutex inversions_mutex_;
};

}  // namespace paramstyle
