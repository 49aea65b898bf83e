#include "drivetune/cli.hpp"

int main(int argc, char** argv) { return drivetune::cli::run_cli(argc, argv); }
