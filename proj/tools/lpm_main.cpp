#include "lpm/cli.hpp"

int main(int argc, char** argv) { return lpm::run_cli(argc, argv); }
