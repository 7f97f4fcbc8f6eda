#pragma once

#include <string>
#include <vector>

namespace splitner {

// Orthographic shape of one subtoken. Whole-token classes collapse to a single
// letter: all-uppercase -> "U", all-lowercase -> "L", all-digits -> "D",
// "[CLS]" -> "C", "[SEP]" -> "S". Mixed tokens map per character to u/l/d with
// special characters kept verbatim. A "##" continuation prefix is stripped
// first and never re-emitted. Character classes are ASCII; non-ASCII characters
// count as special.
std::string pattern_of(const std::string& token);

// Element-wise pattern_of over a tokenized input.
std::vector<std::string> pattern_sequence(const std::vector<std::string>& subtokens);

}  // namespace splitner
