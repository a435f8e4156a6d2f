#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "atam/config.hpp"
#include "atam/dataset.hpp"
#include "atam/sampler.hpp"

namespace httplib {
class Server;
}

namespace atam {

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// The /v1 annotation protocol over ActiveSession. Requests are handled by
// handle(), which is transport free; mount() binds it to an HTTP server.
// Each session has its own lock: readers share it, submissions take it
// exclusively, and the fine-tune between rounds runs on a worker thread
// against a copy that is swapped in when done.
class AnnotationService {
 public:
  explicit AnnotationService(RunConfig defaults);
  ~AnnotationService();

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& authorization, const std::string& body);

  void mount(httplib::Server& server);

  // Blocks until no session is training.
  void wait_idle();

  std::size_t session_count() const;

  // Session files found in the state directory are reopened; a session
  // that was training when saved resumes its fine-tune.
  void restore_sessions();

 private:
  struct Session {
    std::string id;
    std::string token;
    std::string dataset_ref;
    std::string created_at;
    std::string updated_at;
    std::shared_ptr<const Dataset> dataset;
    // Feature reference of every pool row.
    std::vector<std::string> sample_refs;
    // Validation rows used for the summary metrics; may be empty.
    std::shared_ptr<const SplitData> val;
    // Set when a background fine-tune failed.
    std::string error;
    std::unique_ptr<ActiveSession> state;
    // Every resolved query id with its wire answer, for idempotent retries
    // across batches.
    nlohmann::json history = nlohmann::json::object();
    mutable std::shared_mutex mutex;
    std::thread worker;
    std::atomic<bool> training{false};
  };

  HttpResponse create_session(const nlohmann::json& request);
  HttpResponse get_batch(Session& s);
  HttpResponse submit_answers(Session& s, const nlohmann::json& request);
  HttpResponse summary(Session& s);
  HttpResponse labels(Session& s);

  std::shared_ptr<const Dataset> load_dataset_cached(const std::filesystem::path& path);
  std::shared_ptr<Session> find_session(const std::string& id);
  // Caller holds the session lock.
  void persist(const Session& s) const;
  void start_training(const std::shared_ptr<Session>& s);

  RunConfig defaults_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
};

// Binds host:port from settings and serves until the process is stopped.
void run_service(const RunConfig& config);

// Current time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace atam
