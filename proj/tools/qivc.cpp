#include <iostream>
#include <string>
#include <vector>

#include "qivc/cli.hpp"
#include "qivc/runtime.hpp"

int main(int argc, char** argv) {
  qivc::retain_heap_memory();
  std::vector<std::string> args(argv + 1, argv + argc);
  return qivc::run_cli(args, std::cout, std::cerr);
}
