#include "met2net/cli.hpp"

int main(int argc, char** argv) { return met2net::cli::run(argc, argv); }
