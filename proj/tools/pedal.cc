#include <iostream>

#include "pedal/cli.h"

int main(int argc, char** argv) { return pedal::run_cli(argc, argv, std::cout, std::cerr); }
