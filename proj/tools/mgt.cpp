#include <iostream>

#include "mgt/cli.hpp"

int main(int argc, char** argv) { return mgt::run_cli(argc, argv, std::cout, std::cerr); }
