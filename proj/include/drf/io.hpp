#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace drf {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// One RFC-4180 record per call. Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields);
std::string csv_escape(std::string_view field);

}  // namespace drf
