#include <iostream>

#include "msdc_cli/cli.hpp"

int main(int argc, char** argv) {
  return msdc::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
