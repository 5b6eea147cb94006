#include <iostream>

#include "absde/cli.hpp"

int main(int argc, char** argv) { return absde::run_cli(argc, argv, std::cout, std::cerr); }
