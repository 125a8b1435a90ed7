#include "cli.hpp"

int main(int argc, char** argv) { return pseudoseg::cli::dispatch(argc, argv); }
