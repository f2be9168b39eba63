#include <iostream>

#include "qfmqtt_cli/cli.hpp"

int main(int argc, char** argv) {
  return qfmqtt::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
