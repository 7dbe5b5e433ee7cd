#include "dopcc/cli.hpp"

int main(int argc, char** argv) { return dopcc::cli::run(argc, argv); }
