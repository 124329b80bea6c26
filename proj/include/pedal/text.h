#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pedal::text {

/// Decodes UTF-8 into code points. Invalid bytes decode as their Latin-1 value.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

char32_t to_lower(char32_t c);
bool is_upper(char32_t c);
bool is_space(char32_t c);
bool is_punct(char32_t c);
bool is_digit(char32_t c);

/// Strips a trailing "\n" or "\r\n".
std::string_view chomp(std::string_view line);

std::vector<std::string_view> split(std::string_view s, char sep);

/// Escapes backslash, tab, newline and carriage return so a field fits on one line.
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

/// printf("%.*f") without locale surprises.
std::string fixed(double v, int decimals = 6);

}  // namespace pedal::text
