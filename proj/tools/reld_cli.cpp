/// @file reld_cli.cpp
/// @brief `reld` executable.

#include "reld/cli.hpp"

int main(int argc, char** argv) { return reld::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
