#include <iostream>
#include <string>
#include <vector>

#include "cfpn/cli.hpp"
#include "cfpn/runtime.hpp"

int main(int argc, char** argv) {
  cfpn::tune_allocator();
  const std::vector<std::string> args(argv, argv + argc);
  return cfpn::run_cli(args, std::cout, std::cerr);
}
