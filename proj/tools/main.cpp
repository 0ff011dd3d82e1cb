#include <iostream>

#include "arf/cli.hpp"

int main(int argc, char** argv) { return arf::run_cli(argc, argv, std::cout, std::cerr); }
