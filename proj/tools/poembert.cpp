#include "poembert/cli.hpp"

int main(int argc, char** argv) { return poembert::cli::dispatch(argc, argv); }
