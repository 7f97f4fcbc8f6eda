#include "splitner/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace splitner {

char tag_sym_char(TagSym s) {
    switch (s) {
        case TagSym::O: return 'O';
        case TagSym::B: return 'B';
        case TagSym::I: return 'I';
        case TagSym::E: return 'E';
    }
    return '?';
}

TagSequence TagSequence::of(std::vector<Tag> t) {
    TagSequence seq;
    seq.loss_mask.assign(t.size(), true);
    seq.tags = std::move(t);
    return seq;
}

int Dataset::total_mentions() const {
    int n = 0;
    for (const auto& [id, ms] : gold) n += static_cast<int>(ms.size());
    return n;
}

std::string tag_to_string(const Tag& t) {
    std::string s(1, tag_sym_char(t.sym));
    if (!t.type.empty()) {
        s += '-';
        s += t.type;
    }
    return s;
}

Tag tag_from_string(const std::string& s) {
    if (s.empty()) throw std::runtime_error("empty tag");
    Tag t;
    switch (s[0]) {
        case 'O': t.sym = TagSym::O; break;
        case 'B': t.sym = TagSym::B; break;
        case 'I': t.sym = TagSym::I; break;
        case 'E': t.sym = TagSym::E; break;
        default: throw std::runtime_error("illegal tag symbol '" + s + "'");
    }
    if (s.size() == 1) return t;
    if (s[1] != '-') throw std::runtime_error("illegal tag symbol '" + s + "'");
    if (t.sym == TagSym::O) throw std::runtime_error("O tag cannot carry a type: '" + s + "'");
    t.type = s.substr(2);
    if (t.type.empty()) throw std::runtime_error("empty type in tag '" + s + "'");
    return t;
}

Dataset parse_conll(const std::string& text) {
    Dataset d;
    std::vector<Token> tokens;
    std::vector<Tag> tags;
    std::set<std::string> types;
    int line_no = 0;

    auto flush_sentence = [&]() {
        if (tokens.empty()) return;
        Sentence s;
        s.id = "s" + std::to_string(d.sentences.size());
        s.tokens = std::move(tokens);
        tokens.clear();
        TagSequence seq = TagSequence::of(std::move(tags));
        tags.clear();
        std::vector<Mention> mentions = decode_tags(seq);
        for (const auto& m : mentions)
            if (!m.entity_type.empty()) types.insert(m.entity_type);
        d.gold[s.id] = std::move(mentions);
        d.sentences.push_back(std::move(s));
    };

    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        bool at_end = (nl == std::string::npos);
        std::string line = text.substr(pos, at_end ? std::string::npos : nl - pos);
        pos = at_end ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush_sentence();
            if (at_end) break;
            continue;
        }
        size_t tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected token<TAB>tag, got '" + line + "'");
        std::string tok = line.substr(0, tab);
        std::string tag = line.substr(tab + 1);
        if (tok.empty())
            throw std::runtime_error("line " + std::to_string(line_no) + ": empty token");
        for (char c : tok)
            if (c == ' ' || c == '\t')
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": token contains whitespace");
        Tag parsed;
        try {
            parsed = tag_from_string(tag);
        } catch (const std::exception& e) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        Token t;
        t.text = tok;
        t.index = static_cast<int>(tokens.size());
        tokens.push_back(std::move(t));
        tags.push_back(std::move(parsed));
        if (at_end) {
            flush_sentence();
            break;
        }
    }
    flush_sentence();
    d.type_inventory.assign(types.begin(), types.end());
    return d;
}

std::string serialize_conll(const Dataset& d) {
    std::string out;
    for (const auto& s : d.sentences) {
        auto it = d.gold.find(s.id);
        const std::vector<Mention> empty;
        const std::vector<Mention>& ms = it == d.gold.end() ? empty : it->second;
        TagSequence seq = encode_tags(ms, s.size(), /*typed=*/true);
        for (int i = 0; i < s.size(); ++i) {
            out += s.tokens[i].text;
            out += '\t';
            out += tag_to_string(seq.tags[i]);
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

TagSequence encode_tags(const std::vector<Mention>& mentions, int n, bool typed) {
    std::vector<Mention> sorted = mentions;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    std::vector<Tag> tags(static_cast<size_t>(std::max(n, 0)));
    int prev_end = -1;
    for (const auto& m : sorted) {
        if (m.start < 0 || m.end >= n || m.start > m.end)
            throw std::runtime_error("mention (" + std::to_string(m.start) + "," +
                                     std::to_string(m.end) + ") out of bounds for n=" +
                                     std::to_string(n));
        if (m.start <= prev_end)
            throw std::runtime_error("overlapping mentions at token " +
                                     std::to_string(m.start));
        prev_end = m.end;
        const std::string& ty = typed ? m.entity_type : kUntyped;
        tags[m.start] = Tag{TagSym::B, ty};
        if (m.end > m.start) {
            for (int i = m.start + 1; i < m.end; ++i) tags[i] = Tag{TagSym::I, ty};
            tags[m.end] = Tag{TagSym::E, ty};
        }
    }
    return TagSequence::of(std::move(tags));
}

std::vector<Mention> decode_tags(const TagSequence& seq) {
    std::vector<Mention> out;
    int open_start = -1;
    std::string open_type;

    auto close_at = [&](int end) {
        out.push_back(Mention{open_start, end, open_type});
        open_start = -1;
        open_type.clear();
    };

    const int n = seq.size();
    for (int i = 0; i < n; ++i) {
        const Tag& t = seq.tags[i];
        switch (t.sym) {
            case TagSym::O:
                if (open_start >= 0) close_at(i - 1);
                break;
            case TagSym::B:
                if (open_start >= 0) close_at(i - 1);
                open_start = i;
                open_type = t.type;
                break;
            case TagSym::I:
                if (open_start >= 0 && open_type != t.type) close_at(i - 1);
                if (open_start < 0) {
                    open_start = i;
                    open_type = t.type;
                }
                break;
            case TagSym::E:
                if (open_start >= 0 && open_type != t.type) close_at(i - 1);
                if (open_start < 0) {
                    open_start = i;
                    open_type = t.type;
                }
                close_at(i);
                break;
        }
    }
    if (open_start >= 0) close_at(n - 1);
    return out;
}

TagSequence convert_scheme_bio_to_bioe(const TagSequence& seq) {
    const int n = seq.size();
    std::vector<Tag> out = seq.tags;
    for (int i = 0; i < n; ++i) {
        const Tag& t = seq.tags[i];
        if (t.sym == TagSym::E)
            throw std::runtime_error("invalid BIO sequence: E at position " + std::to_string(i));
        if (t.sym == TagSym::I) {
            if (i == 0)
                throw std::runtime_error("invalid BIO sequence: leading I");
            const Tag& p = seq.tags[i - 1];
            if (p.sym == TagSym::O || p.type != t.type)
                throw std::runtime_error("invalid BIO sequence: dangling I at position " +
                                         std::to_string(i));
        }
    }
    for (int i = 0; i < n; ++i) {
        if (out[i].sym != TagSym::I) continue;
        bool last = (i + 1 == n) || seq.tags[i + 1].sym != TagSym::I ||
                    seq.tags[i + 1].type != out[i].type;
        if (last) out[i].sym = TagSym::E;
    }
    TagSequence r;
    r.tags = std::move(out);
    r.loss_mask = seq.loss_mask;
    return r;
}

std::vector<std::string> validate_dataset(const Dataset& d) {
    std::vector<std::string> violations;
    std::set<std::string> known(d.type_inventory.begin(), d.type_inventory.end());
    for (const auto& s : d.sentences) {
        if (s.size() < 1) violations.push_back(s.id + ": empty sentence");
        auto it = d.gold.find(s.id);
        if (it == d.gold.end()) continue;
        std::vector<Mention> ms = it->second;
        std::sort(ms.begin(), ms.end());
        int prev_end = -1;
        for (const auto& m : ms) {
            std::string where = s.id + ": mention (" + std::to_string(m.start) + "," +
                                std::to_string(m.end) + "," + m.entity_type + ")";
            if (m.start > m.end) violations.push_back(where + " start>end");
            if (m.start < 0 || m.end >= s.size()) violations.push_back(where + " out of bounds");
            if (m.start <= prev_end) violations.push_back(where + " overlaps previous mention");
            prev_end = std::max(prev_end, m.end);
            if (!m.entity_type.empty() && !known.count(m.entity_type))
                violations.push_back(where + " unknown type '" + m.entity_type + "'");
        }
    }
    return violations;
}

int tag_symbol_count(int num_types) { return num_types > 0 ? 3 * num_types + 1 : 4; }

int tag_to_id(const Tag& t, const std::vector<std::string>& types) {
    if (types.empty()) return static_cast<int>(t.sym);
    if (t.sym == TagSym::O) return 0;
    const auto it = std::find(types.begin(), types.end(), t.type);
    if (it == types.end()) throw std::runtime_error("tag type '" + t.type + "' not in inventory");
    const int ti = static_cast<int>(it - types.begin());
    return 1 + 3 * ti + (static_cast<int>(t.sym) - 1);
}

Tag tag_from_id(int id, const std::vector<std::string>& types) {
    if (id < 0 || id >= tag_symbol_count(static_cast<int>(types.size())))
        throw std::runtime_error("tag id " + std::to_string(id) + " out of range");
    if (types.empty()) return Tag{static_cast<TagSym>(id), kUntyped};
    if (id == 0) return Tag{TagSym::O, kUntyped};
    const int ti = (id - 1) / 3;
    const int sym = (id - 1) % 3 + 1;
    return Tag{static_cast<TagSym>(sym), types[static_cast<size_t>(ti)]};
}

}  // namespace splitner
