#include <iostream>

#include "xcomm/bench_cli.hpp"

int main(int argc, char** argv) {
    return xcomm::bench::run_cli(argc, argv, std::cout, std::cerr);
}
