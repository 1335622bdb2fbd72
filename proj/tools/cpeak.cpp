#include "cpeak/cli.hpp"

int main(int argc, char** argv) { return cpeak::cli::run(argc, argv); }
