#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "splitner/pattern.hpp"

using namespace splitner;

TEST_CASE("uniform tokens collapse to one class letter") {
    CHECK(pattern_of("USA") == "U");
    CHECK(pattern_of("hello") == "L");
    CHECK(pattern_of("2023") == "D");
    CHECK(pattern_of("X") == "U");
    CHECK(pattern_of("x") == "L");
    CHECK(pattern_of("7") == "D");
}

TEST_CASE("mixed tokens map per character, punctuation kept verbatim") {
    CHECK(pattern_of("Covid-19") == "ullll-dd");
    CHECK(pattern_of("Emily") == "ullll");
    CHECK(pattern_of("iPhone") == "lullll");
    CHECK(pattern_of("a.b") == "l.l");
    CHECK(pattern_of("--") == "--");
    CHECK(pattern_of("3-D") == "d-u");
}

TEST_CASE("marker tokens get dedicated classes") {
    CHECK(pattern_of("[CLS]") == "C");
    CHECK(pattern_of("[SEP]") == "S");
    // other bracketed tokens are ordinary mixed text
    CHECK(pattern_of("[PAD]") == "[uuu]");
}

TEST_CASE("continuation prefix is stripped before mapping") {
    CHECK(pattern_of("##ing") == "L");
    CHECK(pattern_of("##AB") == "U");
    CHECK(pattern_of("##x2") == "ld");
    // the literal token "##" is not a continuation of anything
    CHECK(pattern_of("##") == "##");
    CHECK(pattern_of("##a") == "L");
}

TEST_CASE("the mapping is not idempotent: class letters are ordinary text") {
    CHECK(pattern_of("ULD") == "U");    // all-uppercase input, not three classes
    CHECK(pattern_of("Ull") == "ull");  // mixed input maps again
    CHECK(pattern_of(pattern_of("Covid")) == "L");  // "ullll" is all-lowercase
}

TEST_CASE("non-ASCII bytes are outside every class and pass through") {
    CHECK(pattern_of("é") == "é");
    CHECK(pattern_of("naïve") == "ll\xc3\xafll");
}

TEST_CASE("sequences map elementwise") {
    const std::vector<std::string> in = {"[CLS]", "Emily", "[SEP]", "x", "##9"};
    const std::vector<std::string> expect = {"C", "ullll", "S", "L", "D"};
    CHECK(pattern_sequence(in) == expect);
    CHECK(pattern_sequence({}).empty());
}
