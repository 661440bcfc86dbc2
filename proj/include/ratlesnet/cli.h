#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ratlesnet {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kData = 2;
inline constexpr int kNumeric = 3;
}  // namespace exit_code

// args excludes the program name. Diagnostics and progress go to `err`;
// `out` only receives help text.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ratlesnet
