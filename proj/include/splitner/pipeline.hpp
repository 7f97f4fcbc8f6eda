#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitner/config.hpp"
#include "splitner/corpus.hpp"
#include "splitner/models.hpp"

namespace splitner {

using MentionMap = std::map<std::string, std::vector<Mention>>;

struct PredictedMention {
    Mention mention;
    double score = 1.0;  // classifier probability; 1.0 for argmax-only paths
};

using PredictionMap = std::map<std::string, std::vector<PredictedMention>>;

MentionMap strip_scores(const PredictionMap& preds);

// Two-step inference: entity-agnostic span detection, then one classification
// query per detected span. Sentences whose spans the detector misses yield
// nothing — classifier quality cannot recover them. Throws when the two models
// were built against different vocabularies.
PredictionMap run_pipeline(const std::vector<Sentence>& sentences, DetectorModel& detector,
                           ClassifierModel& classifier);

struct EvalReport {
    struct Counts {
        int64_t tp = 0, fp = 0, fn = 0;
        double precision = 0, recall = 0, f1 = 0;
    };
    std::string mode;  // "typed" | "untyped"
    Counts overall;
    std::map<std::string, Counts> per_type;  // typed mode only

    std::string table() const;
    std::string json() const;
};

// Mention-level micro scores. Typed mode matches (start, end, type), untyped
// mode matches (start, end) with types ignored. Sentences are matched by id
// over the union of both maps; duplicates within a sentence count once.
// Zero denominators give 0, except when gold and pred are both globally empty,
// which scores 1 across the board.
EvalReport micro_f1(const MentionMap& gold, const MentionMap& pred, bool typed);

// Maps a run configuration and variant onto concrete model/optimizer setups;
// shared by the trainer, the benchmark harness, and the command-line driver.
DetectorConfig detector_config_for(const RunConfig& cfg, Variant v,
                                   const std::vector<std::string>& types);
EncoderConfig classifier_encoder_for(const RunConfig& cfg);
OptimizerConfig optimizer_config_for(const RunConfig& cfg);

enum class QueryKind {
    kSplitDetection,
    kSplitClassification,
    kSingleQa,
    kSingleSeqtag,
};

// Exact encoder-input counts per dataset pass: detection and the single-model
// variants cost one query per sentence (times the type count for the per-type
// QA baseline); classification costs one query per mention asked about.
int64_t count_queries(QueryKind kind, const Dataset& data, int64_t mentions_queried = 0);

struct BenchRow {
    std::string variant;
    std::vector<double> train_seconds;  // one entry per run (epoch wall time)
    std::vector<double> infer_seconds;
    double train_mean = 0, train_std = 0;
    double infer_mean = 0, infer_std = 0;
    int64_t train_inputs_per_epoch = 0;
    int64_t infer_inputs = 0;
};

struct BenchReport {
    int runs = 0;
    std::vector<BenchRow> rows;

    std::string table() const;
    std::string json() const;
    const BenchRow& row(const std::string& variant) const;
};

// Times one fresh training epoch and one full inference pass per run for each
// variant, averaged over cfg.bench_runs runs. Encoder-input counts are taken
// from the process counter and cross-checked against count_queries; a mismatch
// throws. Runs pinned to one worker thread.
BenchReport benchmark(const Dataset& train, const Dataset& eval_data, const RunConfig& cfg,
                      const std::vector<Variant>& variants);

// Synthetic corpus families, surface-separable by orthographic shape.
struct SynthTypeSpec {
    std::string name;    // entity type label
    std::string family;  // caps | digits | cap_bigram | capword | code
};

struct SynthSpec {
    std::vector<SynthTypeSpec> types;
    double density = 2.0;       // mean mentions per sentence (Poisson)
    std::string pool = "all";   // all | train | eval — disjoint surface halves
};

// Family order: caps/ORG, digits/NUM, cap_bigram/LOC, capword/PER, code/MISC.
SynthSpec default_synth_spec(int n_types, double density, const std::string& pool);

// Deterministic per seed. Every sentence mixes lowercase filler (which cycles
// through a fixed pool that includes the question vocabulary, so question
// tokenization stays compact) with mention surfaces from the family pools.
// Gold mentions never overlap.
Dataset generate_synthetic_corpus(uint64_t seed, int n_sentences, const SynthSpec& spec);

}  // namespace splitner
