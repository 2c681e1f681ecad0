#include <iostream>

#include "jepagrasp/cli.hpp"

int main(int argc, char** argv) { return jepagrasp::run_cli(argc, argv, std::cout, std::cerr); }
