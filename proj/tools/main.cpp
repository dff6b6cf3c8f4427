#include "overlap/cli.hpp"

int main(int argc, char** argv) { return overlap::run_cli(argc, argv); }
