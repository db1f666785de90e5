#include <iostream>

#include "facemat/cli/cli.hpp"

int main(int argc, char** argv) {
  return facemat::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
