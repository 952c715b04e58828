#include <iostream>

#include "mdev/cli.hpp"

int main(int argc, char** argv) { return mdev::cli::run(argc, argv, std::cout, std::cerr); }
