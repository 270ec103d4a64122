#pragma once

#include <string>

namespace fids {

// hex SHA-256 of a byte string
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

} // namespace fids
