#include <iostream>

#include "netmix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return netmix::run_command(args, std::cout, std::cerr);
}
