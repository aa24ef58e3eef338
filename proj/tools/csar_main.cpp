#include <iostream>

#include "csar/pipeline.hpp"

int main(int argc, char** argv) { return csar::run_cli(argc, argv, std::cout, std::cerr); }
