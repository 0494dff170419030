#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared by the codecs and loaders. All case folding is
// ASCII-only; non-ASCII bytes pass through unchanged.
namespace bioner::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

// Splits on runs of ASCII whitespace; never returns empty pieces.
std::vector<std::string> split_ws(std::string_view s);

// Splits on every occurrence of `sep`; keeps empty pieces.
std::vector<std::string> split(std::string_view s, std::string_view sep);

std::string join(std::span<const std::string> parts, std::string_view sep);

// Number of Unicode code points in a UTF-8 string (continuation bytes are
// not counted; invalid sequences count one per byte).
std::size_t utf8_length(std::string_view s);

// Case-insensitive substring test.
bool icontains(std::string_view haystack, std::string_view needle);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace bioner::text
