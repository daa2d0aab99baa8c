#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "topicflow/evaluation.hpp"

namespace topicflow::harness {

struct ResponseLog {
  std::vector<evaluation::CoderResponse> responses;
  std::vector<std::string> bad_lines;  // unparsable, partial or duplicate records
};

// Read-only parse of a response log. A final line without a newline is
// treated as a partial write.
ResponseLog read_response_log(const std::filesystem::path& path);

// Append-only, one JSON record per line, fsync'd per append. Opening the
// store moves bad records to <path>.quarantine and rewrites the log without
// them. Appends are serialized by an internal mutex.
class ResponseStore {
 public:
  // option_counts: task_id -> number of options.
  ResponseStore(std::filesystem::path path, std::unordered_map<std::string, std::size_t> option_counts);
  ~ResponseStore();
  ResponseStore(const ResponseStore&) = delete;
  ResponseStore& operator=(const ResponseStore&) = delete;

  // Throws UnknownTask, InvalidChoice, DuplicateResponse or IoError.
  void record(const evaluation::CoderResponse& response);

  std::vector<evaluation::CoderResponse> responses() const;
  std::optional<evaluation::CoderResponse> find(const std::string& task_id, const std::string& coder_id) const;
  std::size_t quarantined() const { return quarantined_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, std::size_t> option_counts_;
  mutable std::mutex mutex_;
  std::vector<evaluation::CoderResponse> responses_;
  std::unordered_map<std::string, std::size_t> index_;  // task_id + '\n' + coder_id
  std::size_t quarantined_ = 0;
  int fd_ = -1;
};

}  // namespace topicflow::harness
