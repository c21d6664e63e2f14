#include <iostream>

#include "causalrec/cli.hpp"

int main(int argc, char** argv) { return causalrec::cli::run(argc, argv, std::cout, std::cerr); }
