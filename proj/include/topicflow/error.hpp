#pragma once

#include <stdexcept>
#include <string>

namespace topicflow {

// Every module reports failures through Error. `code` is a stable
// identifier (EmptyCorpus, RankDeficient, ...) that the CLI prints in its
// machine-parsable error line; `module` names the component that raised it.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)), code_(std::move(code)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }

 private:
  std::string module_;
  std::string code_;
};

}  // namespace topicflow
