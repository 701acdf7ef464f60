#include <iostream>
#include <string>
#include <vector>

#include "poolnet/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return poolnet::run_cli(args, std::cout, std::cerr);
}
