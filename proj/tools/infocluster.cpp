#include <string>
#include <vector>

#include "infocluster/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return infocluster::cli::run(args);
}
