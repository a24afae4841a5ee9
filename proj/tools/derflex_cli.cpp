#include "derflex/cli.hpp"

int main(int argc, char** argv) { return derflex::cli_main(argc, argv); }
