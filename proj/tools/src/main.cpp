#include <iostream>

#include "leaflet_cli/cli.hpp"

int main(int argc, char** argv) {
    return leaflet::cli::run(argc, argv, std::cout, std::cerr);
}
