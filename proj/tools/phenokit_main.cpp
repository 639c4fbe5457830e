#include "phenokit/cli.hpp"

int main(int argc, char** argv) { return phenokit::cli::run(argc, argv); }
