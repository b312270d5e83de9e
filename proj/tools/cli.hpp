#pragma once

#include <string>
#include <vector>

namespace sciana::cli {

/// Exit codes: 0 success, 1 internal error, 2 configuration or usage error,
/// 3 id mismatch, 4 backend unavailable, 5 missing input, 6 tool returned an error.
int main(int argc, const char* const* argv);
int main(const std::vector<std::string>& args);

}  // namespace sciana::cli
