#include <iostream>

#include "bayesdyn/cli.hpp"

int main(int argc, char** argv) { return bayesdyn::cli::run(argc, argv, std::cout, std::cerr); }
