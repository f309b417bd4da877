#include <iostream>

#include "tap/cli.hpp"

int main(int argc, char** argv) { return tap::run_cli(argc, argv, std::cout, std::cerr); }
