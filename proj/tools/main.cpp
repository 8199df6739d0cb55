#include "cli.hpp"

int main(int argc, char** argv) { return poundkit::cli::run(argc, argv); }
