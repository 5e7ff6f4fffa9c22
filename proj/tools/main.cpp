#include "cnncausal/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cnncausal::run_cli(argc, argv, std::cout, std::cerr); }
