#pragma once

#include <string>
#include <vector>

namespace motifrep::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 2 usage or validation error, 3 numeric or runtime failure.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace motifrep::cli
