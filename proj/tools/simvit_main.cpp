#include <iostream>

#include "simvit/cli.hpp"

int main(int argc, char** argv) { return simvit::run_cli(argc, argv, std::cout, std::cerr); }
