#pragma once

#include <map>
#include <string>
#include <vector>

namespace splitner {

// Untyped mentions and tags carry an empty type string.
inline const std::string kUntyped = "";

struct Token {
    std::string text;
    int index = 0;
};

struct Sentence {
    std::vector<Token> tokens;
    std::string id;

    int size() const { return static_cast<int>(tokens.size()); }
};

// Inclusive token span [start, end] with an entity type (or untyped).
struct Mention {
    int start = 0;
    int end = 0;
    std::string entity_type;

    bool operator==(const Mention& o) const {
        return start == o.start && end == o.end && entity_type == o.entity_type;
    }
    bool operator<(const Mention& o) const {
        if (start != o.start) return start < o.start;
        if (end != o.end) return end < o.end;
        return entity_type < o.entity_type;
    }
};

enum class TagSym : uint8_t { O = 0, B = 1, I = 2, E = 3 };

char tag_sym_char(TagSym s);

struct Tag {
    TagSym sym = TagSym::O;
    std::string type;  // empty for O and for untyped B/I/E

    bool operator==(const Tag& o) const { return sym == o.sym && type == o.type; }
};

// Per-position tags with a parallel loss mask. Word-level sequences have all
// mask bits set; subtoken-level sequences mask out continuations and specials.
struct TagSequence {
    std::vector<Tag> tags;
    std::vector<bool> loss_mask;

    int size() const { return static_cast<int>(tags.size()); }
    static TagSequence of(std::vector<Tag> t);
};

struct Dataset {
    std::vector<Sentence> sentences;
    std::map<std::string, std::vector<Mention>> gold;
    std::vector<std::string> type_inventory;  // sorted, distinct

    int num_types() const { return static_cast<int>(type_inventory.size()); }
    int total_mentions() const;
};

// Renders a tag as it appears in a CoNLL file: "O", "B", "B-PER", ...
std::string tag_to_string(const Tag& t);
Tag tag_from_string(const std::string& s);  // throws on illegal symbol

// Parses "token<TAB>tag" lines, blank line between sentences. Accepts BIO or
// BIOE tags; gold mentions are recovered with the repairing decoder, so both
// schemes produce identical mentions. Throws std::runtime_error naming the
// offending line on malformed input.
Dataset parse_conll(const std::string& text);

// Canonical serialization: BIOE tags, "\n" endings, one blank line after each
// sentence (including the last). parse_conll of a canonical file followed by
// serialize_conll is byte-identical.
std::string serialize_conll(const Dataset& d);

// BIOE encoding: multi-token span gets B..I..E, single-token span gets a lone
// B. typed=false drops entity types (entity-agnostic detection targets).
// Throws on overlapping or out-of-bounds mentions.
TagSequence encode_tags(const std::vector<Mention>& mentions, int n, bool typed);

// Total decoder over arbitrary tag sequences (model argmax output included).
// Repair, applied left to right:
//   (a) I or E with no open span opens one
//   (b) a type switch mid-span closes the current span and opens a new one
//   (c) O or end of sequence closes an open span at the previous token
//   (d) E closes the span inclusively at that token
// Output is sorted, non-overlapping, in-bounds.
std::vector<Mention> decode_tags(const TagSequence& tags);

// Relabels the last token of each multi-token span from I to E. Input must be
// a valid BIO sequence (no E symbols, no dangling I); throws otherwise.
TagSequence convert_scheme_bio_to_bioe(const TagSequence& tags);

// Reports overlapping mentions, out-of-bounds spans and unknown types; an
// empty result means the dataset is well formed.
std::vector<std::string> validate_dataset(const Dataset& d);

// Dense tag ids for classifier heads. Untyped: O=0, B=1, I=2, E=3. Typed over
// T types: shared O=0, then per type t the triple B=1+3t, I=2+3t, E=3+3t —
// 3T+1 symbols total. `types` empty selects the untyped scheme.
int tag_symbol_count(int num_types);
int tag_to_id(const Tag& t, const std::vector<std::string>& types);
Tag tag_from_id(int id, const std::vector<std::string>& types);

}  // namespace splitner
