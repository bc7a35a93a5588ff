#include "pipcdr/cli.hpp"

int main(int argc, char** argv) { return pipcdr::cli_main(argc, argv); }
