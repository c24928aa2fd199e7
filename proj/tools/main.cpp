#include <iostream>
#include <string>
#include <vector>

#include "volfilter/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return volfilter::cli(args, std::cout, std::cerr);
}
