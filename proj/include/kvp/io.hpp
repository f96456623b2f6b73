#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kvp::io {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv(const std::string& line);

std::string sha256_hex(std::string_view data);

void write_file(const std::filesystem::path& p, std::string_view content);
std::string read_file(const std::filesystem::path& p);

}  // namespace kvp::io
