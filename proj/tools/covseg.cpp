#include <iostream>

#include "covseg/cli/app.hpp"

int main(int argc, char** argv) {
  return covseg::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
