#include "splitner/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "splitner/kernels.hpp"

namespace splitner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::set<Mention> mention_set(const std::vector<Mention>& ms, bool typed) {
    std::set<Mention> out;
    for (const Mention& m : ms)
        out.insert(typed ? m : Mention{m.start, m.end, kUntyped});
    return out;
}

void fill_rates(EvalReport::Counts& c) {
    c.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                  : 0.0;
    c.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                               : 0.0;
    c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall)
                                      : 0.0;
}

}  // namespace

MentionMap strip_scores(const PredictionMap& preds) {
    MentionMap out;
    for (const auto& [id, ms] : preds) {
        auto& dst = out[id];
        for (const PredictedMention& pm : ms) dst.push_back(pm.mention);
    }
    return out;
}

PredictionMap run_pipeline(const std::vector<Sentence>& sentences, DetectorModel& detector,
                           ClassifierModel& classifier) {
    if (!detector.cfg.types.empty())
        throw std::runtime_error("pipeline detector must use the untyped tag scheme");
    if (vocab_fingerprint(detector.vocab) != vocab_fingerprint(classifier.vocab))
        throw std::runtime_error(
            "detector and classifier were built against different vocabularies");
    PredictionMap out;
    for (const Sentence& s : sentences) {
        std::vector<PredictedMention>& dst = out[s.id];
        for (const Mention& span : detect_spans(detector, s)) {
            const ClassifyResult r = classify_span(classifier, s, span);
            dst.push_back(PredictedMention{
                Mention{span.start, span.end, r.type},
                static_cast<double>(r.distribution[static_cast<size_t>(r.type_index)])});
        }
    }
    return out;
}

EvalReport micro_f1(const MentionMap& gold, const MentionMap& pred, bool typed) {
    EvalReport rep;
    rep.mode = typed ? "typed" : "untyped";

    std::set<std::string> ids;
    for (const auto& [id, _] : gold) ids.insert(id);
    for (const auto& [id, _] : pred) ids.insert(id);

    int64_t total_gold = 0, total_pred = 0;
    static const std::vector<Mention> kNone;
    for (const std::string& id : ids) {
        const auto git = gold.find(id);
        const auto pit = pred.find(id);
        const std::set<Mention> g = mention_set(git == gold.end() ? kNone : git->second, typed);
        const std::set<Mention> p = mention_set(pit == pred.end() ? kNone : pit->second, typed);
        total_gold += static_cast<int64_t>(g.size());
        total_pred += static_cast<int64_t>(p.size());
        for (const Mention& m : p)
            (g.count(m) ? rep.overall.tp : rep.overall.fp) += 1;
        for (const Mention& m : g)
            if (!p.count(m)) ++rep.overall.fn;
        if (typed) {
            for (const Mention& m : p)
                (g.count(m) ? rep.per_type[m.entity_type].tp : rep.per_type[m.entity_type].fp) +=
                    1;
            for (const Mention& m : g)
                if (!p.count(m)) ++rep.per_type[m.entity_type].fn;
        }
    }

    if (total_gold == 0 && total_pred == 0) {
        rep.overall.precision = rep.overall.recall = rep.overall.f1 = 1.0;
        return rep;
    }
    fill_rates(rep.overall);
    for (auto& [_, c] : rep.per_type) fill_rates(c);
    return rep;
}

std::string EvalReport::table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "mode: " << mode << "\n";
    out << std::left << std::setw(12) << "type" << std::right << std::setw(7) << "tp"
        << std::setw(7) << "fp" << std::setw(7) << "fn" << std::setw(10) << "prec"
        << std::setw(10) << "recall" << std::setw(10) << "f1" << "\n";
    auto row = [&](const std::string& name, const Counts& c) {
        out << std::left << std::setw(12) << name << std::right << std::setw(7) << c.tp
            << std::setw(7) << c.fp << std::setw(7) << c.fn << std::setw(10) << c.precision
            << std::setw(10) << c.recall << std::setw(10) << c.f1 << "\n";
    };
    for (const auto& [name, c] : per_type) row(name, c);
    row("ALL", overall);
    return out.str();
}

std::string EvalReport::json() const {
    nlohmann::json j;
    j["mode"] = mode;
    auto dump = [](const Counts& c) {
        return nlohmann::json{{"tp", c.tp},           {"fp", c.fp},
                              {"fn", c.fn},           {"precision", c.precision},
                              {"recall", c.recall},   {"f1", c.f1}};
    };
    j["overall"] = dump(overall);
    for (const auto& [name, c] : per_type) j["per_type"][name] = dump(c);
    return j.dump(2);
}

int64_t count_queries(QueryKind kind, const Dataset& data, int64_t mentions_queried) {
    const int64_t n = static_cast<int64_t>(data.sentences.size());
    switch (kind) {
        case QueryKind::kSplitDetection: return n;
        case QueryKind::kSplitClassification: return mentions_queried;
        case QueryKind::kSingleQa: return n * data.num_types();
        case QueryKind::kSingleSeqtag: return n;
    }
    return 0;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

}  // namespace

DetectorConfig detector_config_for(const RunConfig& cfg, Variant v,
                                   const std::vector<std::string>& types) {
    DetectorConfig dc;
    dc.encoder.layers = cfg.encoder_layers;
    dc.encoder.heads = cfg.encoder_heads;
    dc.encoder.hidden = cfg.encoder_hidden;
    dc.encoder.ff = cfg.encoder_ff;
    dc.encoder.max_seq_len = cfg.max_seq_len;
    dc.encoder.dropout = cfg.dropout;
    dc.use_char = cfg.char_feature;
    dc.use_pattern = cfg.pattern_feature;
    switch (v) {
        case Variant::kSplitQaQa:
            dc.question = cfg.question_text;
            break;
        case Variant::kSplitNocharQa:
            dc.question = cfg.question_text;
            dc.use_char = false;
            dc.use_pattern = false;
            break;
        case Variant::kSplitSeqtagQa:
        case Variant::kSingleSeqtag:
            dc.question.clear();
            break;
        case Variant::kSingleQa:
            dc.question.clear();  // questions supplied per type at runtime
            break;
    }
    if (v == Variant::kSingleSeqtag) dc.types = types;
    return dc;
}

EncoderConfig classifier_encoder_for(const RunConfig& cfg) {
    EncoderConfig ec;
    ec.layers = cfg.encoder_layers;
    ec.heads = cfg.encoder_heads;
    ec.hidden = cfg.encoder_hidden;
    ec.ff = cfg.encoder_ff;
    ec.max_seq_len = cfg.max_seq_len;
    ec.dropout = cfg.dropout;
    return ec;
}

OptimizerConfig optimizer_config_for(const RunConfig& cfg) {
    OptimizerConfig oc;
    oc.kind = cfg.optimizer == "sgd" ? OptimizerConfig::Kind::kSgd
                                     : OptimizerConfig::Kind::kAdam;
    oc.lr = cfg.lr;
    return oc;
}

BenchReport benchmark(const Dataset& train, const Dataset& eval_data, const RunConfig& cfg,
                      const std::vector<Variant>& variants) {
    const int saved_threads = kernels::threads();
    kernels::set_threads(1);  // timing stability: one worker
    BenchReport report;
    report.runs = cfg.bench_runs;

    const int64_t gold_mentions = train.total_mentions();
    const Vocab vocab = build_vocab(train, cfg.vocab_size, cfg.lowercase);

    for (Variant v : variants) {
        BenchRow row;
        row.variant = to_string(v);
        for (int run = 0; run < cfg.bench_runs; ++run) {
            const uint64_t seed = cfg.seed + static_cast<uint64_t>(run);
            Rng order_rng(seed), drop_rng(seed + 1);
            DetectorModel det(detector_config_for(cfg, v, train.type_inventory), vocab, seed);
            Optimizer<float> det_opt(optimizer_config_for(cfg));

            int64_t c0 = encoder_input_count();
            double train_time = 0.0;
            int64_t expected_train = 0;
            if (is_split_variant(v)) {
                ClassifierModel cls(classifier_encoder_for(cfg), train.type_inventory, vocab,
                                    seed + 17);
                Optimizer<float> cls_opt(optimizer_config_for(cfg));
                train_time += train_detector_epoch(det, train, det_opt, cfg.batch_size,
                                                   order_rng, drop_rng)
                                  .seconds;
                train_time += train_classifier_epoch(cls, train, cls_opt, cfg.batch_size,
                                                     cfg.gamma, order_rng, drop_rng)
                                  .seconds;
                expected_train = count_queries(QueryKind::kSplitDetection, train) +
                                 count_queries(QueryKind::kSplitClassification, train,
                                               gold_mentions);
                row.train_seconds.push_back(train_time);
                const int64_t counted_train = encoder_input_count() - c0;
                if (counted_train != expected_train)
                    throw std::runtime_error("benchmark: counted " +
                                             std::to_string(counted_train) +
                                             " training inputs, expected " +
                                             std::to_string(expected_train));
                row.train_inputs_per_epoch = expected_train;

                // Inference over the held-out split with this run's models.
                c0 = encoder_input_count();
                const auto t0 = Clock::now();
                const PredictionMap preds = run_pipeline(eval_data.sentences, det, cls);
                row.infer_seconds.push_back(seconds_since(t0));
                int64_t detected = 0;
                for (const auto& [_, ms] : preds) detected += static_cast<int64_t>(ms.size());
                const int64_t expected_inf =
                    count_queries(QueryKind::kSplitDetection, eval_data) +
                    count_queries(QueryKind::kSplitClassification, eval_data, detected);
                const int64_t counted_inf = encoder_input_count() - c0;
                if (counted_inf != expected_inf)
                    throw std::runtime_error("benchmark: counted " +
                                             std::to_string(counted_inf) +
                                             " inference inputs, expected " +
                                             std::to_string(expected_inf));
                row.infer_inputs = counted_inf;
            } else {
                const bool per_type = v == Variant::kSingleQa;
                train_time = train_detector_epoch(det, train, det_opt, cfg.batch_size, order_rng,
                                                  drop_rng, per_type)
                                 .seconds;
                expected_train = count_queries(
                    per_type ? QueryKind::kSingleQa : QueryKind::kSingleSeqtag, train);
                row.train_seconds.push_back(train_time);
                const int64_t counted_train = encoder_input_count() - c0;
                if (counted_train != expected_train)
                    throw std::runtime_error("benchmark: counted " +
                                             std::to_string(counted_train) +
                                             " training inputs, expected " +
                                             std::to_string(expected_train));
                row.train_inputs_per_epoch = expected_train;

                c0 = encoder_input_count();
                const auto t0 = Clock::now();
                for (const Sentence& s : eval_data.sentences) {
                    if (per_type)
                        single_qa_infer(det, s, eval_data.type_inventory);
                    else
                        detect_spans(det, s);
                }
                row.infer_seconds.push_back(seconds_since(t0));
                const int64_t expected_inf = count_queries(
                    per_type ? QueryKind::kSingleQa : QueryKind::kSingleSeqtag, eval_data);
                const int64_t counted_inf = encoder_input_count() - c0;
                if (counted_inf != expected_inf)
                    throw std::runtime_error("benchmark: counted " +
                                             std::to_string(counted_inf) +
                                             " inference inputs, expected " +
                                             std::to_string(expected_inf));
                row.infer_inputs = counted_inf;
            }
        }
        mean_std(row.train_seconds, row.train_mean, row.train_std);
        mean_std(row.infer_seconds, row.infer_mean, row.infer_std);
        report.rows.push_back(std::move(row));
    }
    kernels::set_threads(saved_threads);
    return report;
}

const BenchRow& BenchReport::row(const std::string& variant) const {
    for (const BenchRow& r : rows)
        if (r.variant == variant) return r;
    throw std::runtime_error("no benchmark row for variant " + variant);
}

std::string BenchReport::table() const {
    std::ostringstream out;
    out << "runs: " << runs << "\n";
    out << std::left << std::setw(20) << "variant" << std::right << std::setw(16)
        << "train s/epoch" << std::setw(10) << "std" << std::setw(16) << "infer s"
        << std::setw(10) << "std" << std::setw(14) << "train inputs" << std::setw(14)
        << "infer inputs" << "\n";
    out << std::fixed << std::setprecision(3);
    for (const BenchRow& r : rows)
        out << std::left << std::setw(20) << r.variant << std::right << std::setw(16)
            << r.train_mean << std::setw(10) << r.train_std << std::setw(16) << r.infer_mean
            << std::setw(10) << r.infer_std << std::setw(14) << r.train_inputs_per_epoch
            << std::setw(14) << r.infer_inputs << "\n";
    return out.str();
}

std::string BenchReport::json() const {
    nlohmann::json j;
    j["runs"] = runs;
    for (const BenchRow& r : rows) {
        nlohmann::json row;
        row["variant"] = r.variant;
        row["train_seconds"] = r.train_seconds;
        row["infer_seconds"] = r.infer_seconds;
        row["train_mean"] = r.train_mean;
        row["train_std"] = r.train_std;
        row["infer_mean"] = r.infer_mean;
        row["infer_std"] = r.infer_std;
        row["train_inputs_per_epoch"] = r.train_inputs_per_epoch;
        row["infer_inputs"] = r.infer_inputs;
        j["rows"].push_back(row);
    }
    return j.dump(2);
}

namespace {

const std::vector<std::string>& caps_pool() {
    static const std::vector<std::string> pool = {
        "ALPHA",    "BRAVO",   "CHARLIE", "DELTA",  "ECHO",    "FOXTROT", "GOLF",
        "HOTEL",    "INDIA",   "JULIETT", "KILO",   "LIMA",    "MIKE",    "NOVEMBER",
        "OSCAR",    "PAPA",    "QUEBEC",  "ROMEO",  "SIERRA",  "TANGO",   "UNIFORM",
        "VICTOR",   "WHISKEY", "XRAY",    "YANKEE", "ZULU"};
    return pool;
}

const std::vector<std::string>& digits_pool() {
    static const std::vector<std::string> pool = {"0123456789", "42",    "1999",  "2020",
                                                  "77",         "365",   "23",    "8080",
                                                  "555",        "12345", "90210", "3141"};
    return pool;
}

const std::vector<std::string>& bigram_pool() {
    static std::vector<std::string> pool;
    if (pool.empty()) {
        const std::vector<std::string> first = {"North", "South", "East",  "West",
                                                "Upper", "Lower", "Port",  "Fort",
                                                "Lake",  "Cape",  "Grand", "Little"};
        const std::vector<std::string> second = {"Haven", "Ridge", "Field", "Burg",
                                                 "Ville", "Ford",  "Shore", "Gate",
                                                 "Wood",  "Dale",  "Mont",  "Bay"};
        for (size_t i = 0; i < first.size(); ++i) pool.push_back(first[i] + " " + second[i]);
        for (size_t i = 0; i < first.size(); ++i)
            pool.push_back(first[i] + " " + second[(i + 5) % second.size()]);
    }
    return pool;
}

const std::vector<std::string>& capword_pool() {
    static const std::vector<std::string> pool = {
        "Alice", "Bruno",  "Clara", "Derek", "Elena", "Felix", "Grace", "Hugo",  "Iris",
        "Jonas", "Karin",  "Leon",  "Mona",  "Nils",  "Olga",  "Pablo", "Quinn", "Rosa",
        "Sven",  "Tania",  "Ute",   "Viktor", "Wanda", "Xenia", "Yusuf", "Zelda"};
    return pool;
}

const std::vector<std::string>& code_pool() {
    static const std::vector<std::string> pool = {
        "Ax7",  "Bq42", "Cz19", "Dk3",  "Ef88", "Gh5",  "Jm21", "Kp9",
        "Lr77", "Ms4",  "Nt60", "Pv8",  "Qw12", "Rx3",  "Sy95", "Tz7",
        "Uv2",  "Wb64", "Xc1",  "Yd50", "Ze6",  "Fg33", "Hj8",  "Vk40"};
    return pool;
}

const std::vector<std::string>& family_pool(const std::string& family) {
    if (family == "caps") return caps_pool();
    if (family == "digits") return digits_pool();
    if (family == "cap_bigram") return bigram_pool();
    if (family == "capword") return capword_pool();
    if (family == "code") return code_pool();
    throw std::runtime_error("unknown surface family \"" + family + "\"");
}

std::vector<std::string> pool_slice(const std::vector<std::string>& full,
                                    const std::string& pool) {
    const size_t half = full.size() / 2;
    if (pool == "train") return {full.begin(), full.begin() + half};
    if (pool == "eval") return {full.begin() + half, full.end()};
    if (pool == "all") return full;
    throw std::runtime_error("synthetic pool must be all, train, or eval, got \"" + pool +
                             "\"");
}

// Lowercase filler. Includes a pangram (so the charset covers a-z), the words
// of every question template, the lowercased type names, and "?" — keeping
// question tokenization compact once the vocabulary is built on the corpus.
const std::vector<std::string>& filler_pool() {
    static const std::vector<std::string> pool = {
        "the",       "quick", "brown",     "fox",  "jumps", "over", "lazy",      "dog",
        "what",      "is",    "where",     "extract", "important", "entity", "spans",
        "from",      "following", "text",  "mentioned", "in",  "a",    "an",    "and",
        "of",        "to",    "with",      "near", "went",  "saw",  "came",     "back",
        "home",      "they",  "said",      "that", "was",   "were", "for",      "on",
        "at",        "by",    "org",       "num",  "loc",   "per",  "misc",     "?"};
    return pool;
}

}  // namespace

SynthSpec default_synth_spec(int n_types, double density, const std::string& pool) {
    static const std::vector<SynthTypeSpec> all = {{"ORG", "caps"},
                                                   {"NUM", "digits"},
                                                   {"LOC", "cap_bigram"},
                                                   {"PER", "capword"},
                                                   {"MISC", "code"}};
    if (n_types < 1 || n_types > static_cast<int>(all.size()))
        throw std::runtime_error("synthetic corpus supports 1 to " +
                                 std::to_string(all.size()) + " types, got " +
                                 std::to_string(n_types));
    SynthSpec spec;
    spec.types.assign(all.begin(), all.begin() + n_types);
    spec.density = density;
    spec.pool = pool;
    return spec;
}

Dataset generate_synthetic_corpus(uint64_t seed, int n_sentences, const SynthSpec& spec) {
    if (spec.types.empty()) throw std::runtime_error("synthetic spec has no types");
    if (spec.density < 0) throw std::runtime_error("synthetic density must be >= 0");
    if (n_sentences < 1) throw std::runtime_error("need at least one sentence");
    std::vector<std::vector<std::string>> pools;
    for (const SynthTypeSpec& t : spec.types) {
        if (t.name.empty()) throw std::runtime_error("synthetic type with empty name");
        pools.push_back(pool_slice(family_pool(t.family), spec.pool));
    }
    const std::vector<std::string>& filler = filler_pool();
    const int T_ = static_cast<int>(spec.types.size());
    constexpr int kMaxMentionsPerSentence = 8;

    Rng rng(seed);
    Dataset d;
    for (int si = 0; si < n_sentences; ++si) {
        const int k = std::min<int>(static_cast<int>(rng.poisson(spec.density)),
                                    kMaxMentionsPerSentence);
        const int filler_total = 6 + static_cast<int>(rng.below(7));
        std::vector<int> gap(static_cast<size_t>(k) + 1, 0);
        for (int j = 0; j < filler_total; ++j) ++gap[rng.below(gap.size())];

        Sentence s;
        s.id = "s" + std::to_string(si);
        std::vector<Mention> gold;
        auto push_word = [&](const std::string& w) {
            s.tokens.push_back(Token{w, static_cast<int>(s.tokens.size())});
        };
        // Cycle one guaranteed filler per sentence so every filler word (and
        // with it the question vocabulary) appears in a large enough corpus.
        push_word(filler[static_cast<size_t>(si) % filler.size()]);
        for (int gi = 0; gi <= k; ++gi) {
            for (int j = 0; j < gap[static_cast<size_t>(gi)]; ++j)
                push_word(filler[rng.below(filler.size())]);
            if (gi < k) {
                const int ti = static_cast<int>(rng.below(static_cast<size_t>(T_)));
                const std::vector<std::string>& pool = pools[static_cast<size_t>(ti)];
                const std::string& surface = pool[rng.below(pool.size())];
                const int start = static_cast<int>(s.tokens.size());
                for (const std::string& w : split_words(surface)) push_word(w);
                gold.push_back(Mention{start, static_cast<int>(s.tokens.size()) - 1,
                                       spec.types[static_cast<size_t>(ti)].name});
            }
        }
        d.gold.emplace(s.id, std::move(gold));
        d.sentences.push_back(std::move(s));
    }
    for (const SynthTypeSpec& t : spec.types) d.type_inventory.push_back(t.name);
    std::sort(d.type_inventory.begin(), d.type_inventory.end());
    return d;
}

}  // namespace splitner
