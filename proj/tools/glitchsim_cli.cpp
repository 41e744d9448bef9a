#include <iostream>

#include "glitchsim/cli.hpp"

int main(int argc, char** argv) { return glitchsim::run_cli(argc, argv, std::cout, std::cerr); }
