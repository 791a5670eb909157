#include "gsb/cli.hpp"

int main(int argc, char** argv) { return gsb::cli::main(argc, argv); }
