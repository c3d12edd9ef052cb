#include "crpsgd/cli.hpp"

int main(int argc, char** argv) { return crpsgd::cli::run_main(argc, argv); }
