#include <iostream>

#include "dualmatch/cli.hpp"

int main(int argc, char** argv) {
  return dualmatch::run_cli(argc, argv, std::cout, std::cerr);
}
