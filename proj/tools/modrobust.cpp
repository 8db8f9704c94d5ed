#include <string>
#include <vector>

#include "modrobust/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return modrobust::cli::run_command(args);
}
