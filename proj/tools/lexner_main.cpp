#include "lexner/cli.hpp"

int main(int argc, char** argv) { return lexner::cli::run(argc, argv); }
