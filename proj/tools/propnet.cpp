#include "propnet/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return propnet::cli::run(argc, argv, std::cout, std::cerr); }
