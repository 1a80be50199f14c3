#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pivotmt {

// Splits on runs of ASCII and Unicode whitespace; never yields empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool valid_utf8(std::string_view text);

// Splits UTF-8 into code points (each returned as its byte sequence). Invalid
// bytes are returned one per element.
std::vector<std::string> utf8_chars(std::string_view text);

std::string to_lower_ascii(std::string_view text);

// Reads a text file as LF-separated lines. A trailing newline does not produce
// an empty final line; CR before LF is kept as content. Throws EncodingError
// on invalid UTF-8 (1-based line number) and IoError when unreadable.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes lines joined by LF with a trailing LF, via temp file + rename.
void write_lines_atomic(const std::filesystem::path& path, const std::vector<std::string>& lines);
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Fixed two-decimal percentage of a [0, 1] ratio, rounding half up.
std::string format_percent(double ratio);

}  // namespace pivotmt
