#include "ecgmi/cli.hpp"

int main(int argc, char** argv) { return ecgmi::cli::run_cli(argc, argv); }
