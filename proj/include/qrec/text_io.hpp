#pragma once

// Small helpers shared by the TSV and key=value readers/writers.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qrec::text {

// Shortest text that parses back to the same double.
std::string format_double(double value);

// Strict parse of the whole field; throws DataError with `what` in the message.
double parse_double(std::string_view field, std::string_view what);
std::int64_t parse_int(std::string_view field, std::string_view what);

std::vector<std::string_view> split(std::string_view line, char sep);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

// 64-bit FNV-1a, stable across platforms; used for manifest content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace qrec::text
