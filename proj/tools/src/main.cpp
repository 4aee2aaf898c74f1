#include <iostream>

#include "eegnn_cli/cli.hpp"

int main(int argc, char** argv) { return eegnn::cli::run(argc, argv, std::cout, std::cerr); }
