#pragma once

#include <cstdint>
#include <string>

namespace splitner {

enum class Variant {
    kSplitQaQa,     // QA detector + QA classifier, char+pattern features
    kSplitNocharQa, // QA detector without char/pattern features + QA classifier
    kSplitSeqtagQa, // plain tagging detector (no question) + QA classifier
    kSingleQa,      // one query per (sentence, type)
    kSingleSeqtag,  // one typed tagging pass per sentence
};

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

bool is_split_variant(Variant v);

// Flat key=value run configuration. '#' starts a comment line; unknown keys
// are rejected by name. Defaults below are the documented baseline.
struct RunConfig {
    std::string variant = "splitner_qa_qa";
    std::string question_text = "Extract important entity spans from the following text";
    int batch_size = 16;
    int max_seq_len = 256;
    int epochs = 10;
    uint64_t seed = 42;
    double lr = 5e-5;
    double gamma = 1.0;  // dice smoothing
    std::string optimizer = "adam";
    bool char_feature = true;
    bool pattern_feature = true;
    int encoder_layers = 2;
    int encoder_heads = 4;
    int encoder_hidden = 128;
    int encoder_ff = 512;
    double dropout = 0.1;
    int vocab_size = 2000;
    bool lowercase = false;
    std::string vocab_path;
    std::string train_path;
    std::string eval_path;
    std::string detector_checkpoint;
    std::string classifier_checkpoint;
    std::string eval_mode = "typed";  // or "untyped"
    // synthetic corpus generation
    int synth_sentences = 200;
    double synth_density = 2.0;
    int synth_types = 4;
    std::string synth_pool = "all";  // all | train | eval (disjoint surface pools)
    // benchmark
    int bench_runs = 10;

    Variant variant_enum() const { return variant_from_string(variant); }
    void validate() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

// Every key in a fixed order; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& c);

}  // namespace splitner
