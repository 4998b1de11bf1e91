#pragma once

namespace mslide {

/// Entry point of the mslide command line tool. Returns the process exit code.
int run_cli(int argc, char** argv);

} // namespace mslide
