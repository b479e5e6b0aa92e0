#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dhr::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kDataFormat = 3,
  kNotEstimable = 4,
  kIo = 5,
  kCapacity = 6,
};

// Entry point shared by the `dhr` binary and the tests. `args` excludes the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dhr::cli
