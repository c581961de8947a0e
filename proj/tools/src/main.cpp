#include <iostream>

#include "ppn_cli/commands.hpp"

int main(int argc, char** argv) { return ppn::cli::run(argc, argv, std::cout, std::cerr); }
