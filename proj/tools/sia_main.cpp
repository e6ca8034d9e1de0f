#include <iostream>

#include "sia/cli.hpp"

int main(int argc, char** argv) { return sia::cli::run(argc, argv, std::cout, std::cerr); }
