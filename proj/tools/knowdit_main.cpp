#include <string>
#include <vector>

#include "knowdit/config.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return knowdit::run_cli(args);
}
