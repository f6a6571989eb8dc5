#include "scuf/cli.hpp"

int main(int argc, char** argv) { return scuf::cli::run(argc, argv); }
