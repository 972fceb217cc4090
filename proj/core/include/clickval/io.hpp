#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clickval {

inline constexpr uint64_t kFnvBasis = 1469598103934665603ull;

uint64_t fnv1a(std::string_view data, uint64_t h = kFnvBasis);
uint64_t fnv1a_bytes(const void* data, size_t len, uint64_t h = kFnvBasis);
uint64_t fnv1a_file(const std::filesystem::path& path);

/// Shortest decimal form that round-trips exactly. Used for every double that
/// lands in a CSV or JSON artifact so seeded reruns are byte-identical.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);

/// Temp file + rename; readers never observe partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Minimal RFC-4180 quoting: fields with commas, quotes or newlines get quoted.
std::string csv_field(std::string_view raw);
std::vector<std::string> parse_csv_line(std::string_view line);

}  // namespace clickval
