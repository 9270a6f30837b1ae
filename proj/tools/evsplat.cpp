#include <iostream>

#include "evsplat/commands.hpp"

int main(int argc, char** argv) { return evsplat::run_cli(argc, argv, std::cout, std::cerr); }
