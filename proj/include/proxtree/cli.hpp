#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace proxtree {

// Runs the command line `args` (without the program name) and returns the
// process exit code: 0 success, 2 usage or configuration error, 3 input data
// error, 4 numerical failure, 1 anything else. Normal output goes to `out`,
// diagnostics and warnings to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Lower-case hex SHA-256 of a byte string and of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace proxtree
