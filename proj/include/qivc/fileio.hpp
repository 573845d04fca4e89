#pragma once

#include <filesystem>
#include <string>

namespace qivc {

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace qivc
