#include "topicflow/response_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "topicflow/error.hpp"

namespace topicflow::harness {

using evaluation::CoderResponse;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) { throw Error("harness", code, msg); }

std::string key(const std::string& task, const std::string& coder) { return task + '\n' + coder; }

void write_all(int fd, const std::string& bytes, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("IoError", "write to " + path.string() + " failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

ResponseLog read_response_log(const std::filesystem::path& path) {
  ResponseLog log;
  std::ifstream in(path, std::ios::binary);
  if (!in) return log;
  const std::string content((std::istreambuf_iterator<char>(in)), {});
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start < content.size()) {
    const std::size_t nl = content.find('\n', start);
    const bool complete = nl != std::string::npos;
    std::string line = content.substr(start, complete ? nl - start : std::string::npos);
    start = complete ? nl + 1 : content.size();
    if (line.empty()) continue;
    if (!complete) {
      log.bad_lines.push_back(line);
      continue;
    }
    try {
      auto r = evaluation::response_from_json(nlohmann::json::parse(line));
      if (!seen.insert(key(r.task_id, r.coder_id)).second) {
        log.bad_lines.push_back(line);
        continue;
      }
      log.responses.push_back(std::move(r));
    } catch (const nlohmann::json::exception&) {
      log.bad_lines.push_back(line);
    } catch (const Error&) {
      log.bad_lines.push_back(line);
    }
  }
  return log;
}

ResponseStore::ResponseStore(std::filesystem::path path, std::unordered_map<std::string, std::size_t> option_counts)
    : path_(std::move(path)), option_counts_(std::move(option_counts)) {
  ResponseLog log = read_response_log(path_);
  if (!log.bad_lines.empty()) {
    auto quarantine = path_;
    quarantine += ".quarantine";
    {
      std::ofstream q(quarantine, std::ios::app | std::ios::binary);
      for (const auto& line : log.bad_lines) q << line << '\n';
      if (!q) fail("IoError", "cannot write " + quarantine.string());
    }
    auto tmp = path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
      for (const auto& r : log.responses) out << evaluation::to_json(r).dump() << '\n';
      if (!out) fail("IoError", "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
    quarantined_ = log.bad_lines.size();
  }
  responses_ = std::move(log.responses);
  for (std::size_t i = 0; i < responses_.size(); ++i) index_[key(responses_[i].task_id, responses_[i].coder_id)] = i;

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) fail("IoError", "cannot open " + path_.string() + ": " + std::strerror(errno));
}

ResponseStore::~ResponseStore() {
  if (fd_ >= 0) ::close(fd_);
}

void ResponseStore::record(const CoderResponse& response) {
  auto it = option_counts_.find(response.task_id);
  if (it == option_counts_.end()) fail("UnknownTask", "unknown task '" + response.task_id + "'");
  if (response.choice && *response.choice >= it->second)
    fail("InvalidChoice", "choice out of range for task '" + response.task_id + "'");
  const std::string line = evaluation::to_json(response).dump() + '\n';

  std::lock_guard lock(mutex_);
  const std::string k = key(response.task_id, response.coder_id);
  if (index_.count(k))
    fail("DuplicateResponse", "coder '" + response.coder_id + "' already answered '" + response.task_id + "'");
  write_all(fd_, line, path_);
  if (::fsync(fd_) != 0) fail("IoError", "fsync of " + path_.string() + " failed: " + std::strerror(errno));
  index_[k] = responses_.size();
  responses_.push_back(response);
}

std::vector<CoderResponse> ResponseStore::responses() const {
  std::lock_guard lock(mutex_);
  return responses_;
}

std::optional<CoderResponse> ResponseStore::find(const std::string& task_id, const std::string& coder_id) const {
  std::lock_guard lock(mutex_);
  auto it = index_.find(key(task_id, coder_id));
  if (it == index_.end()) return std::nullopt;
  return responses_[it->second];
}

}  // namespace topicflow::harness
