#include <iostream>

#include "sketchforge/cli.hpp"

int main(int argc, char** argv) { return sketchforge::cli::run(argc, argv, std::cout, std::cerr); }
