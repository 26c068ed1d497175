#include <iostream>

#include "tbnet/cli/cli.hpp"

int main(int argc, char** argv) { return tbnet::cli::run(argc, argv, std::cout, std::cerr); }
