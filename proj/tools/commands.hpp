#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fcm::cli {

// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

// Entry point shared by the binary and the tests. Data goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Git blob id: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);

}  // namespace fcm::cli
