#include "kpz/cli.hpp"

int main(int argc, char** argv) { return kpz::cli::main(argc, argv); }
