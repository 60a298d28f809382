#include "e3s2/cli.hpp"

int main(int argc, char** argv) { return e3s2::run_cli(argc, argv); }
