#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace erpgan {

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole-file read; throws FormatError(missing_file) if absent.
std::string read_file(const std::filesystem::path& path);

}  // namespace erpgan
