#include "cli.hpp"

int main(int argc, char** argv) { return elgof::cli::run(argc, argv); }
