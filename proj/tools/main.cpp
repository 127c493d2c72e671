#include <iostream>
#include <string>
#include <vector>

#include "lpwn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lpwn::run(args, std::cout, std::cerr);
}
