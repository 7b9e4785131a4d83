#include <string>
#include <vector>

#include "evinet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return evinet::cli::run(args);
}
