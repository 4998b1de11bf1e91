#include "mslide/cli.hpp"

int main(int argc, char** argv) { return mslide::run_cli(argc, argv); }
