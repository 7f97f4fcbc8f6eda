#include "splitner/subword.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "splitner/text.hpp"

namespace splitner {

const char* const kSpecialTokens[4] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

namespace {

void add_entry(Vocab& v, const std::string& piece) {
    if (v.lookup.count(piece)) return;
    v.lookup.emplace(piece, static_cast<int>(v.entries.size()));
    v.entries.push_back(piece);
}

}  // namespace

int SubtokenAlignment::num_words() const {
    int n = 0;
    for (int w : word_of) n = std::max(n, w + 1);
    return n;
}

Vocab build_vocab(const Dataset& corpus, int size, bool lowercase) {
    std::set<std::string> charset;
    std::map<std::string, int64_t> word_counts;
    for (const Sentence& s : corpus.sentences)
        for (const Token& t : s.tokens) {
            const std::string word = lowercase ? ascii_tolower(t.text) : t.text;
            ++word_counts[word];
            for (const std::string& c : utf8_chars(word)) charset.insert(c);
        }

    const int minimum = 4 + 2 * static_cast<int>(charset.size());
    if (size < minimum)
        throw std::runtime_error("vocab size " + std::to_string(size) + " below minimum " +
                                 std::to_string(minimum) + " (specials + corpus charset)");

    Vocab v;
    v.lowercase = lowercase;
    for (const char* s : kSpecialTokens) add_entry(v, s);
    for (const std::string& c : charset) add_entry(v, c);
    for (const std::string& c : charset) add_entry(v, "##" + c);

    // Whole words by descending count, ties lexicographic. Single-character
    // words are already present via the charset.
    std::vector<std::pair<std::string, int64_t>> ranked(word_counts.begin(), word_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (const auto& [word, _] : ranked) {
        if (v.size() >= size) break;
        add_entry(v, word);
    }
    return v;
}

std::vector<std::string> tokenize_word(const std::string& word, const Vocab& v) {
    if (word.empty()) throw std::runtime_error("tokenize_word: empty word");
    const std::string w = v.lowercase ? ascii_tolower(word) : word;
    const std::vector<std::string> chars = utf8_chars(w);
    std::vector<std::string> pieces;
    size_t start = 0;
    while (start < chars.size()) {
        size_t end = chars.size();
        int matched = -1;
        std::string matched_piece;
        for (; end > start; --end) {
            std::string cand = start > 0 ? "##" : "";
            for (size_t i = start; i < end; ++i) cand += chars[i];
            const int id = v.id(cand);
            if (id >= 0) {
                matched = id;
                matched_piece = std::move(cand);
                break;
            }
        }
        if (matched < 0) return {kSpecialTokens[Vocab::kUnk]};
        pieces.push_back(std::move(matched_piece));
        start = end;
    }
    return pieces;
}

SubtokenAlignment tokenize_sentence(const Sentence& s, const Vocab& v) {
    SubtokenAlignment a;
    for (int w = 0; w < s.size(); ++w) {
        const std::vector<std::string> pieces = tokenize_word(s.tokens[w].text, v);
        for (size_t i = 0; i < pieces.size(); ++i) {
            a.subtokens.push_back(pieces[i]);
            a.word_of.push_back(w);
            a.is_first.push_back(i == 0 ? 1 : 0);
        }
    }
    return a;
}

TagSequence align_labels(const TagSequence& word_tags, const SubtokenAlignment& alignment) {
    const int n_words = alignment.num_words();
    if (static_cast<int>(word_tags.tags.size()) != n_words)
        throw std::runtime_error("align_labels: " + std::to_string(word_tags.tags.size()) +
                                 " word tags for " + std::to_string(n_words) + " aligned words");
    TagSequence out;
    out.tags.reserve(alignment.subtokens.size());
    out.loss_mask.reserve(alignment.subtokens.size());
    for (int i = 0; i < alignment.size(); ++i) {
        const int w = alignment.word_of[i];
        if (w < 0) {
            out.tags.push_back(Tag{TagSym::O, std::string()});
            out.loss_mask.push_back(0);
        } else {
            out.tags.push_back(word_tags.tags[w]);
            out.loss_mask.push_back(alignment.is_first[i] ? word_tags.loss_mask[w] : 0);
        }
    }
    return out;
}

void save_vocab(const Vocab& v, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    for (const std::string& e : v.entries) f << e << '\n';
    if (!f) throw std::runtime_error("write failed for " + path);
}

Vocab load_vocab(const std::string& path, bool lowercase) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Vocab v;
    v.lowercase = lowercase;
    size_t pos = 0;
    int line_no = 0;
    while (pos < content.size()) {
        size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) nl = content.size();
        std::string line = content.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        if (line.empty())
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": empty vocab entry");
        if (v.lookup.count(line))
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": duplicate entry " + line);
        add_entry(v, line);
        pos = nl + 1;
    }
    if (v.size() < 4)
        throw std::runtime_error(path + ": vocab has fewer entries than the four specials");
    for (int i = 0; i < 4; ++i)
        if (v.entries[i] != kSpecialTokens[i])
            throw std::runtime_error(path + ": entry " + std::to_string(i) + " is " +
                                     v.entries[i] + ", expected " + kSpecialTokens[i]);
    return v;
}

}  // namespace splitner
