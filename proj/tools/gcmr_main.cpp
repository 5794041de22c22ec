#include <iostream>

#include "gcmr/cli.hpp"

int main(int argc, char** argv) { return gcmr::cli::main(argc, argv, std::cout, std::cerr); }
