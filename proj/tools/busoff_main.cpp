#include <iostream>

#include "busoff/cli/commands.hpp"

int main(int argc, char** argv) {
  return busoff::cli::run_cli(argc, argv, std::cout, std::cerr);
}
