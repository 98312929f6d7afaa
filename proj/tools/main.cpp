#include <iostream>

#include "mkdm/cli.hpp"

int main(int argc, char** argv) {
  return mkdm::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
