#include "splitner/pattern.hpp"

#include <stdexcept>

#include "splitner/text.hpp"

namespace splitner {

std::string pattern_of(const std::string& token) {
    if (token.empty()) throw std::runtime_error("pattern_of: empty token");
    if (token == "[CLS]") return "C";
    if (token == "[SEP]") return "S";
    // Strip the continuation marker unless the token is nothing but "##".
    const std::string body =
        token.size() > 2 && token.compare(0, 2, "##") == 0 ? token.substr(2) : token;

    bool all_upper = true, all_lower = true, all_digit = true;
    for (char c : body) {
        all_upper = all_upper && ascii_upper(c);
        all_lower = all_lower && ascii_lower(c);
        all_digit = all_digit && ascii_digit(c);
    }
    if (all_upper) return "U";
    if (all_lower) return "L";
    if (all_digit) return "D";

    std::string out;
    for (const std::string& c : utf8_chars(body)) {
        if (c.size() == 1 && ascii_upper(c[0]))
            out += 'u';
        else if (c.size() == 1 && ascii_lower(c[0]))
            out += 'l';
        else if (c.size() == 1 && ascii_digit(c[0]))
            out += 'd';
        else
            out += c;
    }
    return out;
}

std::vector<std::string> pattern_sequence(const std::vector<std::string>& subtokens) {
    std::vector<std::string> out;
    out.reserve(subtokens.size());
    for (const std::string& t : subtokens) out.push_back(pattern_of(t));
    return out;
}

}  // namespace splitner
