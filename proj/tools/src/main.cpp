#include "fhrr_cli/cli.hpp"

int main(int argc, char** argv) { return fhrr::cli::run(argc, argv); }
