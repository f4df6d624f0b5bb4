#pragma once

#include <string>
#include <vector>

namespace ozcal::cli {

/// Runs one CLI command (args excludes the program name). Exit codes:
/// 0 success, 2 usage error, 3 data error, 4 numerical failure.
int dispatch(const std::vector<std::string>& args);

}  // namespace ozcal::cli
