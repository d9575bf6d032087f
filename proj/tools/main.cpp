// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "layoutforge/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return layoutforge::run_cli(args, std::cout, std::cerr);
}
