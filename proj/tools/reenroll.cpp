#include <iostream>
#include <string>
#include <vector>

#include "reenroll/cli_harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return reenroll::run_cli(args, std::cout, std::cerr);
}
