#include <string>
#include <vector>

#include "ozcal/cli.hpp"

int main(int argc, char** argv) {
  return ozcal::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
