#include <iostream>
#include <string>
#include <vector>

#include "loopcert/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return loopcert::run_cli(args, std::cout, std::cerr);
}
