#include "stiv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stiv::cli::run(argc, argv, std::cout, std::cerr); }
