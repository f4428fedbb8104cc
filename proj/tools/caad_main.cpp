#include <string>
#include <vector>

#include "caad/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return caad::run_cli(args);
}
