#include "qsa/cli.hpp"

int main(int argc, char** argv) { return qsa::cli::run(argc, argv); }
