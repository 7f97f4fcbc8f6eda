#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "splitner/graph.hpp"
#include "splitner/nn.hpp"
#include "splitner/pattern.hpp"
#include "splitner/subword.hpp"
#include "splitner/text.hpp"

namespace splitner {

// Character inventory for the feature embeddings. Slot 0 is a reserved
// unknown-character row; everything else derives deterministically from the
// subword vocabulary so it persists with the vocab file.
struct CharVocab {
    std::vector<std::string> entries;  // entries[0] is the unknown slot
    std::unordered_map<std::string, int> lookup;

    int size() const { return static_cast<int>(entries.size()); }
    int id(const std::string& c) const {
        auto it = lookup.find(c);
        return it == lookup.end() ? 0 : it->second;
    }
    void add(const std::string& c) {
        if (!lookup.count(c)) {
            lookup.emplace(c, static_cast<int>(entries.size()));
            entries.push_back(c);
        }
    }
};

// All single-character vocabulary entries, in vocab order.
inline CharVocab char_vocab_from(const Vocab& v) {
    CharVocab cv;
    cv.add("<unk>");
    for (const std::string& e : v.entries)
        if (utf8_chars(e).size() == 1) cv.add(e);
    return cv;
}

// Pattern alphabet: the shape letters plus every non-alphanumeric character
// that can survive pattern mapping verbatim.
inline CharVocab pattern_vocab_from(const Vocab& v) {
    CharVocab pv;
    pv.add("<unk>");
    for (const char* c : {"U", "L", "D", "u", "l", "d", "C", "S"}) pv.add(c);
    for (const std::string& e : v.entries)
        if (utf8_chars(e).size() == 1 &&
            !(e.size() == 1 && (ascii_upper(e[0]) || ascii_lower(e[0]) || ascii_digit(e[0]))))
            pv.add(e);
    return pv;
}

// Fixed feature-net dimensions. The embedding width and filter count are
// architectural constants; output widths scale with the encoder hidden size
// (at hidden 768 the classic 768/512 widths fall out).
inline constexpr int kFeatureEmbedDim = 50;
inline constexpr int kFeatureFilters = 16;
inline constexpr int kCharKernels = 5;
inline constexpr int kPatternKernels = 3;

inline int pattern_lstm_hidden(int encoder_hidden) { return encoder_hidden / 3; }
inline int pattern_feature_dim(int encoder_hidden) {
    return 2 * pattern_lstm_hidden(encoder_hidden);
}

namespace detail {

// Characters fed to the char CNNs; the continuation marker is dropped so a
// piece's characters are the characters it covers in the word.
inline std::vector<std::string> feature_chars(const std::string& piece) {
    const std::string body =
        piece.size() > 2 && piece.compare(0, 2, "##") == 0 ? piece.substr(2) : piece;
    return utf8_chars(body);
}

// Shared trunk of both feature nets: embed characters, run same-padded 1-D
// convolutions with kernel sizes 1..n_kernels, max-pool each over time, and
// concatenate the pooled filters.
template <typename T>
typename Graph<T>::Ref pooled_conv_stack(Graph<T>& g, typename Graph<T>::Ref embed_table,
                                         const std::vector<typename Graph<T>::Ref>& conv_w,
                                         const std::vector<typename Graph<T>::Ref>& conv_b,
                                         const std::vector<int>& char_ids) {
    const auto embedded = g.embedding(embed_table, char_ids);
    std::vector<typename Graph<T>::Ref> pooled;
    for (size_t i = 0; i < conv_w.size(); ++i) {
        const int k = static_cast<int>(i) + 1;
        pooled.push_back(g.maxpool_time(g.conv1d_same(embedded, conv_w[i], conv_b[i], k)));
    }
    return g.concat_cols(pooled);
}

}  // namespace detail

// Character feature: per subtoken, embed its characters (dim 50), run five
// CNNs (kernels 1..5, 16 filters each), max-pool, concatenate (80), then a
// shared affine + ReLU up to the encoder width. Output [len x hidden]; purely
// per-token (no cross-token context).
template <typename T>
typename Graph<T>::Ref char_features(Graph<T>& g, ParamStore<T>& ps, const CharVocab& chars,
                                     const std::vector<std::string>& subtokens, int hidden) {
    const auto table =
        g.param(ps.get("char.embed", {chars.size(), kFeatureEmbedDim}, Init::kEmbedding));
    std::vector<typename Graph<T>::Ref> conv_w, conv_b;
    for (int k = 1; k <= kCharKernels; ++k) {
        const std::string base = "char.conv" + std::to_string(k);
        conv_w.push_back(
            g.param(ps.get(base + ".w", {k, kFeatureEmbedDim, kFeatureFilters}, Init::kGlorot)));
        conv_b.push_back(g.param(ps.get(base + ".b", {kFeatureFilters}, Init::kZero)));
    }
    const int concat_dim = kCharKernels * kFeatureFilters;
    const auto fc_w = g.param(ps.get("char.fc.w", {concat_dim, hidden}, Init::kGlorot));
    const auto fc_b = g.param(ps.get("char.fc.b", {hidden}, Init::kZero));

    std::vector<typename Graph<T>::Ref> rows;
    rows.reserve(subtokens.size());
    for (const std::string& piece : subtokens) {
        if (piece.empty()) throw std::runtime_error("char_features: empty subtoken");
        std::vector<int> ids;
        for (const std::string& c : detail::feature_chars(piece)) ids.push_back(chars.id(c));
        rows.push_back(detail::pooled_conv_stack(g, table, conv_w, conv_b, ids));
    }
    const auto stacked = g.concat_rows(rows);
    return g.relu(g.add_bias(g.matmul(stacked, fc_w), fc_b));
}

// Pattern feature: per subtoken, embed the characters of its pattern string,
// run three CNNs (kernels 1..3), max-pool, concatenate (48); then a
// bidirectional LSTM over the token sequence. Output [len x 2*(hidden/3)];
// contextual by construction.
template <typename T>
typename Graph<T>::Ref pattern_features(Graph<T>& g, ParamStore<T>& ps,
                                        const CharVocab& pattern_chars,
                                        const std::vector<std::string>& patterns, int hidden) {
    if (patterns.empty()) throw std::runtime_error("pattern_features: empty sequence");
    const auto table = g.param(
        ps.get("pattern.embed", {pattern_chars.size(), kFeatureEmbedDim}, Init::kEmbedding));
    std::vector<typename Graph<T>::Ref> conv_w, conv_b;
    for (int k = 1; k <= kPatternKernels; ++k) {
        const std::string base = "pattern.conv" + std::to_string(k);
        conv_w.push_back(
            g.param(ps.get(base + ".w", {k, kFeatureEmbedDim, kFeatureFilters}, Init::kGlorot)));
        conv_b.push_back(g.param(ps.get(base + ".b", {kFeatureFilters}, Init::kZero)));
    }
    const int concat_dim = kPatternKernels * kFeatureFilters;
    const int h = pattern_lstm_hidden(hidden);

    std::vector<typename Graph<T>::Ref> rows;
    rows.reserve(patterns.size());
    for (const std::string& p : patterns) {
        if (p.empty()) throw std::runtime_error("pattern_features: empty pattern string");
        std::vector<int> ids;
        for (const std::string& c : utf8_chars(p)) ids.push_back(pattern_chars.id(c));
        rows.push_back(detail::pooled_conv_stack(g, table, conv_w, conv_b, ids));
    }
    const auto stacked = g.concat_rows(rows);

    auto dir = [&](const char* name, bool reverse) {
        const std::string base = std::string("pattern.lstm.") + name;
        const auto wx = g.param(ps.get(base + ".wx", {concat_dim, 4 * h}, Init::kGlorot));
        const auto wh = g.param(ps.get(base + ".wh", {h, 4 * h}, Init::kGlorot));
        const auto b = g.param(ps.get(base + ".b", {4 * h}, Init::kZero));
        return g.lstm(stacked, wx, wh, b, h, reverse);
    };
    return g.concat_cols({dir("fw", false), dir("bw", true)});
}

}  // namespace splitner
