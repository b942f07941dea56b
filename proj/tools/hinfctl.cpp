#include "hinfdae/cli.hpp"

// Command-line front end; the real entry point lives in the library so tests
// can drive it in-process.
int main(int argc, char** argv) { return hinfdae::cli::run(argc, argv); }
