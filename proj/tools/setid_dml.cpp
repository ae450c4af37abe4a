#include "setid/cli/commands.hpp"

int main(int argc, char** argv) { return setid::cli::run_cli(argc, argv); }
