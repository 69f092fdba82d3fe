#include <string>
#include <vector>

#include "hesslab/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return hesslab::cli::run(args);
}
