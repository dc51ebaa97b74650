#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace avgmart::cli {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Whole-file contents; FileNotFound when unreadable.
std::string read_file(const std::filesystem::path& path);

}  // namespace avgmart::cli
