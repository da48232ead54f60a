#include "roodso/cli.hpp"

int main(int argc, char** argv) { return roodso::run_cli(argc, argv); }
