#include "helix/cli.hpp"

int main(int argc, char** argv) { return helix::cli_main(argc, argv); }
