#include <iostream>

#include "xgp/cli.hpp"

int main(int argc, char** argv) { return xgp::cli::main(argc, argv, std::cout, std::cerr); }
