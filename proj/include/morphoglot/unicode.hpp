#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace morphoglot {

// UTF-8 <-> scalar values. Malformed bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view scalars);
std::string encode_utf8(char32_t scalar);

// One space between consecutive non-whitespace scalar values:
// "ab cd" -> "a b c d".
std::string char_spaced(std::string_view text);

// True iff the token is non-empty and every scalar value has general
// category P* or S*.
bool is_punctuation_only(std::string_view token);

std::vector<std::string> split_whitespace(std::string_view text);
std::vector<std::string> split_on(std::string_view text, char separator);
std::string_view trim(std::string_view text);

}  // namespace morphoglot
