#include "cli.hpp"

int main(int argc, char** argv) { return sciana::cli::main(argc, argv); }
