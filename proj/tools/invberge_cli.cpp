#include <string>
#include <vector>

#include "invberge/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return invberge::run_command(args);
}
