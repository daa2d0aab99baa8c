#include <iostream>

#include "topicflow/cli.hpp"

int main(int argc, char** argv) {
  return topicflow::harness::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
