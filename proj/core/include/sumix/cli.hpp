#pragma once

namespace sumix {

// Full command-line surface. Exit codes: 0 success, 2 usage or invalid
// configuration, 3 data error, 4 numerical abort.
int run(int argc, const char* const* argv);

}  // namespace sumix
