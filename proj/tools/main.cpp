#include "cli.hpp"

int main(int argc, char** argv) { return georeg::run_cli(argc, argv); }
