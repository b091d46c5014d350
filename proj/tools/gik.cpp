#include "gik/cli.hpp"

int main(int argc, char** argv) { return gik::cli::run(argc, argv); }
