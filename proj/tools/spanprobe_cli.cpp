#include <string>
#include <vector>

#include "spanprobe/cli.hpp"

int main(int argc, char** argv) {
  return spanprobe::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
