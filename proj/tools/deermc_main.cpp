#include <iostream>

#include "deermc/cli/app.hpp"

int main(int argc, char** argv) { return deermc::cli::run_cli(argc, argv, std::cout, std::cerr); }
