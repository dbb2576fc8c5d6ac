#include "bpt/cli.hpp"

int main(int argc, char** argv) { return bpt::cli::run(argc, argv); }
