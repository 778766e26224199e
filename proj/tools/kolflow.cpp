#include "kolflow/cli.hpp"

int main(int argc, char **argv) { return kolflow::cli_main(argc, argv); }
