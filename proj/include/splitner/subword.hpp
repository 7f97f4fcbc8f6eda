#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "splitner/corpus.hpp"

namespace splitner {

// WordPiece-style vocabulary. Entry order defines ids: the four specials come
// first, then every corpus character (bare forms, then "##" continuation
// forms, each sorted), then whole words by descending frequency with ties
// broken lexicographically.
struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;

    std::vector<std::string> entries;
    std::unordered_map<std::string, int> lookup;
    bool lowercase = false;

    int size() const { return static_cast<int>(entries.size()); }

    // -1 when absent.
    int id(const std::string& piece) const {
        auto it = lookup.find(piece);
        return it == lookup.end() ? -1 : it->second;
    }

    const std::string& piece(int id) const { return entries.at(static_cast<size_t>(id)); }
};

extern const char* const kSpecialTokens[4];  // [PAD], [UNK], [CLS], [SEP]

// Builds a vocabulary of at most `size` entries from the corpus. Every corpus
// character is included in both bare and continuation form so tokenization can
// always fall back to characters; `size` must leave room for that charset on
// top of the specials.
Vocab build_vocab(const Dataset& corpus, int size, bool lowercase = false);

// Greedy longest-match-first split of one word into vocabulary pieces,
// continuations prefixed "##". A position with no matching piece makes the
// whole word a single [UNK].
std::vector<std::string> tokenize_word(const std::string& word, const Vocab& v);

// Parallel arrays over one tokenized word sequence. word_of is -1 at positions
// that do not belong to a word (specials, question tokens).
struct SubtokenAlignment {
    std::vector<std::string> subtokens;
    std::vector<int> word_of;
    std::vector<uint8_t> is_first;

    int size() const { return static_cast<int>(subtokens.size()); }
    int num_words() const;
};

// Tokenizes every word of the sentence and records the word alignment.
SubtokenAlignment tokenize_sentence(const Sentence& s, const Vocab& v);

// Expands word-level tags to subtoken positions: the first subtoken of a word
// carries the word's tag and loss mask, continuations repeat the tag with the
// loss masked off, and non-word positions get O with the loss masked off.
TagSequence align_labels(const TagSequence& word_tags, const SubtokenAlignment& alignment);

// Vocab file: one entry per line in id order, specials first.
void save_vocab(const Vocab& v, const std::string& path);
Vocab load_vocab(const std::string& path, bool lowercase = false);

}  // namespace splitner
