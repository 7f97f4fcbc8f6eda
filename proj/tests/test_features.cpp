#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "splitner/corpus.hpp"
#include "splitner/features.hpp"
#include "splitner/graph.hpp"
#include "splitner/nn.hpp"
#include "splitner/subword.hpp"

using namespace splitner;

namespace {

Vocab tiny_vocab() {
    Dataset d;
    Sentence s;
    s.id = "s0";
    for (const char* w : {"Emily", "lives", "in", "NY", "x9", "a-b"})
        s.tokens.push_back(Token{w, s.size()});
    d.sentences.push_back(s);
    d.gold["s0"] = {};
    return build_vocab(d, 200);
}

}  // namespace

TEST_CASE("char vocabulary derives from single-character vocab entries") {
    const Vocab v = tiny_vocab();
    const CharVocab cv = char_vocab_from(v);
    CHECK(cv.entries[0] == "<unk>");
    CHECK(cv.id("E") > 0);
    CHECK(cv.id("9") > 0);
    CHECK(cv.id("-") > 0);
    CHECK(cv.id("§") == 0);  // unknown falls back to slot 0
    // deterministic: derived order follows vocab order
    const CharVocab cv2 = char_vocab_from(v);
    CHECK(cv2.entries == cv.entries);
}

TEST_CASE("pattern vocabulary holds shape letters plus punctuation") {
    const Vocab v = tiny_vocab();
    const CharVocab pv = pattern_vocab_from(v);
    for (const char* c : {"U", "L", "D", "u", "l", "d", "C", "S"}) CHECK(pv.id(c) > 0);
    CHECK(pv.id("-") > 0);   // from "a-b"
    CHECK(pv.id("E") == 0);  // letters never appear in patterns verbatim
    CHECK(pv.id("9") == 0);
}

TEST_CASE("feature widths scale with the encoder hidden size") {
    CHECK(pattern_lstm_hidden(768) == 256);
    CHECK(pattern_feature_dim(768) == 512);
    CHECK(pattern_lstm_hidden(96) == 32);
    CHECK(pattern_feature_dim(96) == 64);
}

TEST_CASE("char features: shape, determinism, and per-token locality") {
    const Vocab v = tiny_vocab();
    const CharVocab cv = char_vocab_from(v);
    const int hidden = 24;

    auto run = [&](const std::vector<std::string>& toks) {
        ParamStore<float> ps(11);
        Graph<float> g;
        const auto out = char_features(g, ps, cv, toks, hidden);
        return g.val(out);
    };

    const Tensor<float> a = run({"Em", "##ily", "lives"});
    CHECK(a.shape == std::vector<int>{3, hidden});
    for (float x : a.data) CHECK(x >= 0.f);  // ReLU output

    const Tensor<float> b = run({"Em", "##ily", "lives"});
    CHECK(a.data == b.data);  // same seed -> bitwise identical

    // per-token: a token's row does not depend on its neighbors
    const Tensor<float> c = run({"Em", "##9", "lives"});
    for (int j = 0; j < hidden; ++j) {
        CHECK(c.at(0, j) == a.at(0, j));
        CHECK(c.at(2, j) == a.at(2, j));
    }

    // the continuation marker is stripped: "##ily" and "ily" embed identically
    const Tensor<float> d = run({"Em", "ily", "lives"});
    for (int j = 0; j < hidden; ++j) CHECK(d.at(1, j) == a.at(1, j));
}

TEST_CASE("pattern features: shape and cross-token context sensitivity") {
    const Vocab v = tiny_vocab();
    const CharVocab pv = pattern_vocab_from(v);
    const int hidden = 24;  // lstm hidden 8, output width 16

    auto run = [&](const std::vector<std::string>& pats) {
        ParamStore<float> ps(13);
        Graph<float> g;
        const auto out = pattern_features(g, ps, pv, pats, hidden);
        return g.val(out);
    };

    const Tensor<float> a = run({"C", "Ullll", "L", "S"});
    CHECK(a.shape == std::vector<int>{4, pattern_feature_dim(hidden)});

    const Tensor<float> b = run({"C", "Ullll", "L", "S"});
    CHECK(a.data == b.data);

    // contextual: changing the last pattern changes earlier rows (BiLSTM)
    const Tensor<float> c = run({"C", "Ullll", "L", "D"});
    bool first_row_changed = false;
    for (int j = 0; j < a.shape[1]; ++j)
        first_row_changed = first_row_changed || c.at(0, j) != a.at(0, j);
    CHECK(first_row_changed);
}

TEST_CASE("feature nets register the expected parameter tensors") {
    const Vocab v = tiny_vocab();
    const CharVocab cv = char_vocab_from(v);
    const CharVocab pv = pattern_vocab_from(v);
    ParamStore<float> ps(1);
    Graph<float> g;
    char_features(g, ps, cv, {"Em"}, 12);
    pattern_features(g, ps, pv, {"U"}, 12);

    for (const char* name :
         {"char.embed", "char.conv1.w", "char.conv5.b", "char.fc.w", "char.fc.b",
          "pattern.embed", "pattern.conv3.w", "pattern.lstm.fw.wx", "pattern.lstm.bw.wh",
          "pattern.lstm.bw.b"})
        CHECK(ps.has(name));
    CHECK(!ps.has("char.conv6.w"));
    CHECK(ps.at("char.embed").shape == std::vector<int>{cv.size(), kFeatureEmbedDim});
    CHECK(ps.at("char.fc.w").shape ==
          std::vector<int>{kCharKernels * kFeatureFilters, 12});
    CHECK(ps.at("pattern.lstm.fw.wx").shape ==
          std::vector<int>{kPatternKernels * kFeatureFilters, 16});  // 4 * (12/3)
}

TEST_CASE("gradients flow from feature outputs back into every feature param") {
    const Vocab v = tiny_vocab();
    const CharVocab cv = char_vocab_from(v);
    const CharVocab pv = pattern_vocab_from(v);
    ParamStore<float> ps(3);
    Graph<float> g;
    const auto cf = char_features(g, ps, cv, {"Em", "##ily"}, 12);
    const auto pf = pattern_features(g, ps, pv, {"Ull", "L"}, 12);
    const auto both = g.concat_cols({cf, pf});
    // reduce to scalar through a weight the test owns
    Tensor<float> w({g.val(both).cols(), 1});
    for (size_t i = 0; i < w.data.size(); ++i) w.data[i] = 0.01f * (static_cast<int>(i) + 1);
    Tensor<float> ones({1, 2});
    ones.fill(1.f);
    g.backward(g.matmul(g.input(std::move(ones)), g.matmul(both, g.input(std::move(w)))));

    int with_grad = 0;
    ps.for_each([&](const std::string& name, Tensor<float>& t) {
        bool nonzero = false;
        for (float gv : t.grad) nonzero = nonzero || gv != 0.f;
        // relu can gate a whole row to zero, but most tensors must receive signal
        if (nonzero) ++with_grad;
        if (name == "pattern.embed" || name == "char.embed") CHECK(nonzero);
    });
    CHECK(with_grad >= 15);
}

TEST_CASE("empty subtokens and empty pattern sequences are rejected") {
    const Vocab v = tiny_vocab();
    const CharVocab cv = char_vocab_from(v);
    const CharVocab pv = pattern_vocab_from(v);
    ParamStore<float> ps(1);
    Graph<float> g;
    CHECK_THROWS_AS(char_features(g, ps, cv, {"Em", ""}, 12), std::runtime_error);
    CHECK_THROWS_AS(pattern_features(g, ps, pv, {}, 12), std::runtime_error);
}
