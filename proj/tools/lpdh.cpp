#include "lpdh/cli.hpp"

int main(int argc, char** argv) { return lpdh::run_cli(argc, argv); }
