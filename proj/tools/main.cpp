#include "cli.hpp"

int main(int argc, char** argv) { return dbke::cli::run({argv + 1, argv + argc}); }
