// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "vrf_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vrf::cli::run(args, std::cout, std::cerr);
}
