#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return sdemetro::run(argc, argv, std::cout, std::cerr); }
