#pragma once

#include <string>
#include <vector>

namespace splitner {

// Splits a UTF-8 string into code-point substrings. Bytes that do not form a
// valid sequence are passed through as single-byte chunks, so the concatenation
// of the result always equals the input.
inline std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        const auto b = static_cast<unsigned char>(s[i]);
        size_t n = 1;
        if ((b & 0xe0) == 0xc0)
            n = 2;
        else if ((b & 0xf0) == 0xe0)
            n = 3;
        else if ((b & 0xf8) == 0xf0)
            n = 4;
        if (i + n > s.size()) n = 1;
        for (size_t j = 1; j < n; ++j)
            if ((static_cast<unsigned char>(s[i + j]) & 0xc0) != 0x80) {
                n = 1;
                break;
            }
        out.push_back(s.substr(i, n));
        i += n;
    }
    return out;
}

// Character classes are ASCII-only; everything else counts as "special".
inline bool ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool ascii_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool ascii_digit(char c) { return c >= '0' && c <= '9'; }

inline std::string ascii_tolower(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (ascii_upper(c)) c = static_cast<char>(c - 'A' + 'a');
    return out;
}

// Splits on runs of spaces; no empty pieces.
inline std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        size_t j = i;
        while (j < s.size() && s[j] != ' ') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace splitner
