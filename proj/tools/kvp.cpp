#include <iostream>

#include "kvp/cli.hpp"

int main(int argc, char** argv) { return kvp::cli::run(argc, argv, std::cout, std::cerr); }
