#include <iostream>

#include "mlrg/cli.hpp"

int main(int argc, char** argv) {
  return mlrg::cli::run(argc, argv, std::cout, std::cerr);
}
