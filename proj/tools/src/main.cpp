#include <iostream>

#include "lifechain_cli/commands.hpp"

int main(int argc, char** argv) {
  return lifechain::cli::run_cli(argc, argv, std::cout, std::cerr);
}
