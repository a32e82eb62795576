#include <iostream>

#include "cbo/cli/commands.hpp"

int main(int argc, char** argv) {
  return cbo::cli::run_cli(argc, argv, std::cout, std::cerr);
}
