#include <iostream>

#include "stic/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stic::cli::run(args, std::cout, std::cerr);
}
