#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitner/corpus.hpp"
#include "splitner/encoder.hpp"
#include "splitner/features.hpp"
#include "splitner/graph.hpp"
#include "splitner/nn.hpp"
#include "splitner/subword.hpp"

namespace splitner {

// One encoder-ready sequence: [CLS] question [SEP] sentence [SEP], post-padded
// on request. Question and special positions carry segment 0 and word_of -1;
// sentence subtokens carry segment 1 and their word index.
struct ModelInput {
    std::vector<int> ids;
    std::vector<int> segments;
    std::vector<uint8_t> attention;
    std::vector<int> word_of;
    std::vector<uint8_t> is_first;
    std::vector<std::string> subtokens;
    int n_words = 0;  // sentence words that survived truncation
    bool truncated = false;

    int size() const { return static_cast<int>(ids.size()); }
    void pad_to(int len);
};

// Builds the detection input. An empty question yields [CLS] [SEP] sentence
// [SEP] (the no-question tagging layout keeps the same frame). When the
// combined sequence would exceed max_seq_len, sentence subtokens are dropped
// from the right, whole words at a time, and the input is flagged truncated.
ModelInput build_detection_input(const Sentence& s, const std::string& question, const Vocab& v,
                                 int max_seq_len);

// Classification input: question is "What is " + mention text + "?", mention
// text being the span's tokens joined with single spaces. Throws when the span
// is out of bounds.
ModelInput build_classification_input(const Sentence& s, const Mention& span, const Vocab& v,
                                      int max_seq_len);

// Process-wide count of encoder invocations; the latency harness cross-checks
// it against the analytic query counts.
int64_t& encoder_input_count();

struct DetectorConfig {
    EncoderConfig encoder;
    bool use_char = true;
    bool use_pattern = true;
    std::string question;            // empty = plain tagging, no question segment
    std::vector<std::string> types;  // non-empty = typed head (3T+1 symbols)

    int tag_symbols() const { return tag_symbol_count(static_cast<int>(types.size())); }
};

// Span detector: encoder output, optionally concatenated with char and pattern
// features, through an affine head to per-position tag logits.
struct DetectorModel {
    DetectorConfig cfg;
    Vocab vocab;
    CharVocab chars;
    CharVocab pattern_chars;
    ParamStore<float> params;

    DetectorModel(DetectorConfig cfg, Vocab vocab, uint64_t seed);

    // Creates every parameter tensor (otherwise they appear on first forward);
    // required before loading a checkpoint.
    void materialize();
};

struct DetectorForward {
    Graph<float> graph;
    Graph<float>::Ref logits = -1;
    Graph<float>::Ref probs = -1;  // softmax rows, [len x tag_symbols]
};

// Runs one input through the detector. Every call counts one encoder input.
DetectorForward detector_forward(DetectorModel& m, const ModelInput& input, bool train,
                                 Rng& drop_rng);

// Argmax tags at first-subtoken positions, padded with O for truncated words;
// always sentence-length.
TagSequence detector_predict_tags(DetectorModel& m, const Sentence& s,
                                  const std::string& question);

// Untyped spans via the repairing decoder, using the model's configured
// question. Typed detectors (single_seqtag) keep their types here.
std::vector<Mention> detect_spans(DetectorModel& m, const Sentence& s);

// Span classifier: encoder CLS output through an affine head to a distribution
// over the type inventory.
struct ClassifierModel {
    EncoderConfig encoder;
    std::vector<std::string> types;
    Vocab vocab;
    ParamStore<float> params;

    ClassifierModel(EncoderConfig encoder, std::vector<std::string> types, Vocab vocab,
                    uint64_t seed);
    void materialize();
};

struct ClassifyResult {
    int type_index = 0;
    std::string type;
    std::vector<float> distribution;  // sums to 1 over the inventory
};

// Ties in the distribution resolve to the lowest type index.
ClassifyResult classify_span(ClassifierModel& m, const Sentence& s, const Mention& span);

struct EpochResult {
    double mean_loss = 0.0;
    double seconds = 0.0;
    int64_t samples = 0;
};

// One pass over the dataset in seed-shuffled order with gradient accumulation
// over `batch_size` samples per optimizer step. Detector samples are one per
// sentence (or one per sentence and type for the per-type question variant);
// classifier samples are one per gold mention. A non-finite loss aborts.
EpochResult train_detector_epoch(DetectorModel& m, const Dataset& data,
                                 Optimizer<float>& opt, int batch_size, Rng& order_rng,
                                 Rng& drop_rng, bool per_type_questions = false);
EpochResult train_classifier_epoch(ClassifierModel& m, const Dataset& data,
                                   Optimizer<float>& opt, int batch_size, double gamma,
                                   Rng& order_rng, Rng& drop_rng);

// Per-type question used by the single-model QA baseline.
std::string per_type_question(const std::string& entity_type);

// One untyped tagging pass per entity type, each asking where that type is
// mentioned; overlaps across types resolve longest span first, then leftmost,
// then lowest type index.
std::vector<Mention> single_qa_infer(DetectorModel& m, const Sentence& s,
                                     const std::vector<std::string>& types);

// Sidecar metadata written next to checkpoints (plain text key=value).
struct ModelMeta {
    std::string variant;
    std::vector<std::string> types;
    uint64_t seed = 0;
    std::string vocab_hash;
    std::string config_text;  // full run config dump
};

void save_model_meta(const std::string& path, const ModelMeta& meta);
ModelMeta load_model_meta(const std::string& path);

// FNV-1a over the serialized vocab, hex; ties checkpoints to their vocab.
std::string vocab_fingerprint(const Vocab& v);

}  // namespace splitner
