#include "winodds/cli_io.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return winodds::run_cli(args, std::cout, std::cerr);
}
