#include "cli.hpp"

int main(int argc, char** argv) { return magcath::cli::run(argc, argv); }
