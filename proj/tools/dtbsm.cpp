#include <iostream>

#include "dtbsm/cli.hpp"

int main(int argc, char** argv) { return dtbsm::run_cli(argc, argv, std::cout, std::cerr); }
