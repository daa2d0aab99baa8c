#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace topicflow::harness {

// Entry point of the `topicflow` command. args excludes the program name.
// Returns 0 on success, 1 on a module error (after printing
// "error: module=<m> code=<c> message=<text>" to err) and 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace topicflow::harness
