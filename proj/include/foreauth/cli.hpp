#pragma once

namespace foreauth::cli {

/// Entry point for the command-line tool; returns the process exit code.
///   0 success, 1 usage error, 2 configuration error, 3 data error,
///   4 runtime numeric failure.
int run(int argc, char** argv);

} // namespace foreauth::cli
