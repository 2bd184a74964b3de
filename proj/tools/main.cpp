#include "cctkit/cli.hpp"

int main(int argc, char** argv) { return cctkit::cli::run(argc, argv); }
