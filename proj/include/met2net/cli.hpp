#pragma once

namespace met2net::cli {

/// Full command-line entry point (argument parsing, dispatch, and the
/// exception -> exit-code mapping): 0 success, 2 configuration error,
/// 3 data/I-O error, 4 numerical abort.
int run(int argc, const char* const* argv);

}  // namespace met2net::cli
