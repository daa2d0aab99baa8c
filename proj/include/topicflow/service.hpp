#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicflow/evaluation.hpp"
#include "topicflow/inference.hpp"

namespace topicflow::harness {

struct SessionSpec {
  std::string id;
  std::filesystem::path tasks;
  std::filesystem::path model;
  std::filesystem::path responses;
  std::map<std::string, std::string> coders;  // opaque token -> coder id
};

struct ServiceConfig {
  std::vector<SessionSpec> sessions;
  std::string admin_token;
  std::filesystem::path ui_dir;
};

// JSON session file; relative paths are resolved against its directory.
// TOPICFLOW_ADMIN_TOKEN, when set, overrides the file's admin_token.
ServiceConfig load_service_config(const std::filesystem::path& path);
const SessionSpec& find_session(const ServiceConfig& config, const std::string& id);

// Sessions are closed by creating <responses>.closed.
std::filesystem::path closed_marker(const SessionSpec& session);
bool is_closed(const SessionSpec& session);
void close_session(const SessionSpec& session);

// Scores of a response set: model precision for word tasks, model precision
// and topic log odds for topic tasks. A kind without scored responses
// reports null metrics. The service and the offline command share this.
nlohmann::json compute_metrics(const evaluation::TaskSet& tasks, std::span<const evaluation::CoderResponse> responses,
                               const inference::TopicModel& model);

// Coder-facing HTTP service. Task payloads never contain intruder
// positions, seeds or topic ids; options are shown in a per-coder order and
// choices are mapped back to canonical positions before storage.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds (port 0 picks a free port), serves on a background thread and
  // returns the bound port. Throws Error{IoError} if binding fails.
  int start(const std::string& host, int port);
  // Blocks until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace topicflow::harness
