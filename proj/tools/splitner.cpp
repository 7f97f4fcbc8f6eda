// Command-line driver: corpus generation, training, prediction, evaluation,
// latency benchmarking, and tokenizer/feature inspection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "splitner/checkpoint.hpp"
#include "splitner/config.hpp"
#include "splitner/corpus.hpp"
#include "splitner/kernels.hpp"
#include "splitner/models.hpp"
#include "splitner/pattern.hpp"
#include "splitner/pipeline.hpp"
#include "splitner/subword.hpp"

namespace fs = std::filesystem;
using namespace splitner;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    int64_t seed_override = -1;
    int runs_override = -1;
};

RunConfig load_effective_config(const CommonArgs& args) {
    RunConfig cfg = parse_config_file(args.config_path);
    if (args.seed_override >= 0) cfg.seed = static_cast<uint64_t>(args.seed_override);
    if (args.runs_override >= 1) cfg.bench_runs = args.runs_override;
    return cfg;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << content;
    if (!f) throw std::runtime_error("write failed for " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Every command leaves the exact configuration it ran with next to its outputs.
std::string prepare_out_dir(const CommonArgs& args, const RunConfig& cfg) {
    const std::string out = args.out_dir.empty() ? "." : args.out_dir;
    fs::create_directories(out);
    write_file(out + "/config.txt", serialize_config(cfg));
    return out;
}

Dataset load_corpus(const std::string& path, const char* what) {
    if (path.empty())
        throw std::runtime_error(std::string(what) + " path not set in config");
    Dataset d = parse_conll(read_file(path));
    const std::vector<std::string> problems = validate_dataset(d);
    if (!problems.empty())
        throw std::runtime_error(path + ": " + problems.front() +
                                 (problems.size() > 1
                                      ? " (+" + std::to_string(problems.size() - 1) + " more)"
                                      : ""));
    return d;
}

Vocab obtain_vocab(RunConfig& cfg, const std::string& out, const Dataset* train) {
    if (!cfg.vocab_path.empty()) return load_vocab(cfg.vocab_path, cfg.lowercase);
    if (train == nullptr)
        throw std::runtime_error("vocab_path not set and no training corpus to build from");
    const Vocab v = build_vocab(*train, cfg.vocab_size, cfg.lowercase);
    cfg.vocab_path = out + "/vocab.txt";
    save_vocab(v, cfg.vocab_path);
    return v;
}

std::string format_loss(double loss) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(8) << loss;
    return s.str();
}

RunConfig config_from_meta(const ModelMeta& meta, const std::string& origin) {
    return parse_config_text(meta.config_text, origin);
}

// Rebuilds a trained detector from its checkpoint + sidecar.
DetectorModel load_detector(const RunConfig& cfg, const Vocab& vocab, ModelMeta& meta_out) {
    if (cfg.detector_checkpoint.empty())
        throw std::runtime_error("detector_checkpoint not set in config");
    meta_out = load_model_meta(cfg.detector_checkpoint + ".meta");
    if (meta_out.variant != cfg.variant)
        throw std::runtime_error("checkpoint/config mismatch: checkpoint was trained as " +
                                 meta_out.variant + ", config asks for " + cfg.variant);
    if (meta_out.vocab_hash != vocab_fingerprint(vocab))
        throw std::runtime_error("checkpoint/vocab mismatch: " + cfg.detector_checkpoint +
                                 " was trained with a different vocabulary");
    const RunConfig train_cfg =
        config_from_meta(meta_out, cfg.detector_checkpoint + ".meta");
    DetectorModel det(detector_config_for(train_cfg, train_cfg.variant_enum(), meta_out.types),
                      vocab, meta_out.seed);
    det.materialize();
    apply_checkpoint(det.params, load_checkpoint(cfg.detector_checkpoint));
    return det;
}

ClassifierModel load_classifier(const RunConfig& cfg, const Vocab& vocab) {
    if (cfg.classifier_checkpoint.empty())
        throw std::runtime_error("classifier_checkpoint not set in config");
    const ModelMeta meta = load_model_meta(cfg.classifier_checkpoint + ".meta");
    if (meta.vocab_hash != vocab_fingerprint(vocab))
        throw std::runtime_error("checkpoint/vocab mismatch: " + cfg.classifier_checkpoint +
                                 " was trained with a different vocabulary");
    const RunConfig train_cfg =
        config_from_meta(meta, cfg.classifier_checkpoint + ".meta");
    ClassifierModel cls(classifier_encoder_for(train_cfg), meta.types, vocab, meta.seed);
    cls.materialize();
    apply_checkpoint(cls.params, load_checkpoint(cfg.classifier_checkpoint));
    return cls;
}

int cmd_gen_synthetic(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const std::string out = prepare_out_dir(args, cfg);
    const Dataset d = generate_synthetic_corpus(
        cfg.seed, cfg.synth_sentences,
        default_synth_spec(cfg.synth_types, cfg.synth_density, cfg.synth_pool));
    const std::string path = out + "/synthetic.conll";
    write_file(path, serialize_conll(d));
    std::cout << "wrote " << path << " (" << d.sentences.size() << " sentences, "
              << d.total_mentions() << " mentions, " << d.num_types() << " types)\n";
    return 0;
}

int cmd_train_detector(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const std::string out = args.out_dir.empty() ? "." : args.out_dir;
    fs::create_directories(out);
    const Dataset train = load_corpus(cfg.train_path, "train");
    const Vocab vocab = obtain_vocab(cfg, out, &train);
    write_file(out + "/config.txt", serialize_config(cfg));  // reflects built vocab path

    const Variant variant = cfg.variant_enum();
    DetectorModel det(detector_config_for(cfg, variant, train.type_inventory), vocab, cfg.seed);
    Optimizer<float> opt(optimizer_config_for(cfg));
    Rng order_rng(cfg.seed), drop_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    const bool per_type = variant == Variant::kSingleQa;

    std::ostringstream log;
    for (int e = 0; e < cfg.epochs; ++e) {
        const EpochResult r =
            train_detector_epoch(det, train, opt, cfg.batch_size, order_rng, drop_rng, per_type);
        log << e << '\t' << format_loss(r.mean_loss) << '\n';
        std::cout << "epoch " << e << " loss " << format_loss(r.mean_loss) << " ("
                  << std::fixed << std::setprecision(1) << r.seconds << "s, " << r.samples
                  << " samples)\n";
    }
    write_file(out + "/detector_loss.tsv", log.str());

    const std::string ckpt = out + "/detector.ckpt";
    save_checkpoint(det.params, ckpt);
    ModelMeta meta;
    meta.variant = cfg.variant;
    meta.types = train.type_inventory;
    meta.seed = cfg.seed;
    meta.vocab_hash = vocab_fingerprint(vocab);
    meta.config_text = serialize_config(cfg);
    save_model_meta(ckpt + ".meta", meta);
    std::cout << "wrote " << ckpt << " (" << det.params.param_count() << " parameters)\n";
    return 0;
}

int cmd_train_classifier(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const std::string out = args.out_dir.empty() ? "." : args.out_dir;
    fs::create_directories(out);
    const Dataset train = load_corpus(cfg.train_path, "train");
    const Vocab vocab = obtain_vocab(cfg, out, &train);
    write_file(out + "/config.txt", serialize_config(cfg));

    ClassifierModel cls(classifier_encoder_for(cfg), train.type_inventory, vocab, cfg.seed);
    Optimizer<float> opt(optimizer_config_for(cfg));
    Rng order_rng(cfg.seed), drop_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::ostringstream log;
    for (int e = 0; e < cfg.epochs; ++e) {
        const EpochResult r = train_classifier_epoch(cls, train, opt, cfg.batch_size, cfg.gamma,
                                                     order_rng, drop_rng);
        log << e << '\t' << format_loss(r.mean_loss) << '\n';
        std::cout << "epoch " << e << " loss " << format_loss(r.mean_loss) << " ("
                  << std::fixed << std::setprecision(1) << r.seconds << "s, " << r.samples
                  << " samples)\n";
    }
    write_file(out + "/classifier_loss.tsv", log.str());

    const std::string ckpt = out + "/classifier.ckpt";
    save_checkpoint(cls.params, ckpt);
    ModelMeta meta;
    meta.variant = cfg.variant;
    meta.types = cls.types;
    meta.seed = cfg.seed;
    meta.vocab_hash = vocab_fingerprint(vocab);
    meta.config_text = serialize_config(cfg);
    save_model_meta(ckpt + ".meta", meta);
    std::cout << "wrote " << ckpt << " (" << cls.params.param_count() << " parameters)\n";
    return 0;
}

nlohmann::json mention_json(const PredictedMention& pm) {
    return nlohmann::json{{"start", pm.mention.start},
                          {"end", pm.mention.end},
                          {"type", pm.mention.entity_type},
                          {"score", pm.score}};
}

int cmd_predict(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const std::string out = prepare_out_dir(args, cfg);
    const Dataset eval_data = load_corpus(cfg.eval_path, "eval");
    const Vocab vocab = obtain_vocab(cfg, out, nullptr);

    ModelMeta det_meta;
    DetectorModel det = load_detector(cfg, vocab, det_meta);
    const Variant variant = cfg.variant_enum();

    PredictionMap preds;
    if (is_split_variant(variant)) {
        ClassifierModel cls = load_classifier(cfg, vocab);
        preds = run_pipeline(eval_data.sentences, det, cls);
    } else {
        for (const Sentence& s : eval_data.sentences) {
            std::vector<PredictedMention>& dst = preds[s.id];
            const std::vector<Mention> ms = variant == Variant::kSingleQa
                                                ? single_qa_infer(det, s, det_meta.types)
                                                : detect_spans(det, s);
            for (const Mention& m : ms) dst.push_back(PredictedMention{m, 1.0});
        }
    }

    std::ostringstream lines;
    for (const Sentence& s : eval_data.sentences) {
        nlohmann::json rec;
        rec["id"] = s.id;
        rec["tokens"] = nlohmann::json::array();
        for (const Token& t : s.tokens) rec["tokens"].push_back(t.text);
        rec["mentions"] = nlohmann::json::array();
        for (const PredictedMention& pm : preds[s.id]) rec["mentions"].push_back(mention_json(pm));
        lines << rec.dump() << '\n';
    }
    const std::string path = out + "/predictions.jsonl";
    write_file(path, lines.str());
    std::cout << "wrote " << path << " (" << eval_data.sentences.size() << " sentences)\n";
    return 0;
}

MentionMap read_predictions(const std::string& path) {
    std::istringstream in(read_file(path));
    MentionMap out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        std::vector<Mention>& ms = out[rec.at("id").get<std::string>()];
        for (const auto& m : rec.at("mentions"))
            ms.push_back(Mention{m.at("start").get<int>(), m.at("end").get<int>(),
                                 m.at("type").get<std::string>()});
    }
    return out;
}

int cmd_evaluate(const CommonArgs& args, const std::string& pred_path) {
    RunConfig cfg = load_effective_config(args);
    const Dataset gold = load_corpus(cfg.eval_path, "eval");
    if (pred_path.empty()) throw std::runtime_error("--pred is required for evaluate");
    const MentionMap pred = read_predictions(pred_path);
    const EvalReport rep = micro_f1(gold.gold, pred, cfg.eval_mode == "typed");
    std::cout << rep.table();
    std::cout << std::fixed << std::setprecision(4) << "micro-F1 " << rep.overall.f1 << " ("
              << rep.mode << ")\n";
    if (!args.out_dir.empty()) {
        const std::string out = prepare_out_dir(args, cfg);
        write_file(out + "/eval.txt", rep.table());
        write_file(out + "/eval.json", rep.json());
    }
    return 0;
}

int cmd_benchmark(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const std::string out = prepare_out_dir(args, cfg);
    const Dataset train = load_corpus(cfg.train_path, "train");
    const Dataset eval_data = load_corpus(cfg.eval_path, "eval");
    const std::vector<Variant> variants = {Variant::kSplitQaQa, Variant::kSplitNocharQa,
                                           Variant::kSplitSeqtagQa, Variant::kSingleQa,
                                           Variant::kSingleSeqtag};
    const BenchReport rep = benchmark(train, eval_data, cfg, variants);
    std::cout << rep.table();
    write_file(out + "/bench.txt", rep.table());
    write_file(out + "/bench.json", rep.json());
    return 0;
}

int cmd_featurize(const CommonArgs& args) {
    RunConfig cfg = load_effective_config(args);
    const Dataset data =
        load_corpus(cfg.eval_path.empty() ? cfg.train_path : cfg.eval_path, "eval");
    Vocab vocab;
    if (!cfg.vocab_path.empty()) {
        vocab = load_vocab(cfg.vocab_path, cfg.lowercase);
    } else {
        vocab = build_vocab(data, cfg.vocab_size, cfg.lowercase);
    }
    std::ostringstream out;
    for (const Sentence& s : data.sentences) {
        out << "# " << s.id << '\n';
        for (const Token& t : s.tokens) {
            out << t.text << '\t';
            const std::vector<std::string> pieces = tokenize_word(t.text, vocab);
            for (size_t i = 0; i < pieces.size(); ++i) out << (i ? " " : "") << pieces[i];
            out << '\t';
            const std::vector<std::string> pats = pattern_sequence(pieces);
            for (size_t i = 0; i < pats.size(); ++i) out << (i ? " " : "") << pats[i];
            out << '\n';
        }
        out << '\n';
    }
    if (args.out_dir.empty()) {
        std::cout << out.str();
    } else {
        RunConfig copy = cfg;
        const std::string dir = prepare_out_dir(args, copy);
        write_file(dir + "/featurize.txt", out.str());
        std::cout << "wrote " << dir << "/featurize.txt\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-step span detection + classification NER pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string pred_path;
    auto add_common = [&](CLI::App* sub, bool with_runs = false) {
        sub->add_option("--config", args.config_path, "key=value run configuration")
            ->required();
        sub->add_option("--out", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed_override, "override the config seed");
        if (with_runs)
            sub->add_option("--runs", args.runs_override, "override benchmark run count");
    };

    CLI::App* gen = app.add_subcommand("gen-synthetic", "write a synthetic corpus");
    add_common(gen);
    CLI::App* td = app.add_subcommand("train-detector", "train the span detector");
    add_common(td);
    CLI::App* tc = app.add_subcommand("train-classifier", "train the span classifier");
    add_common(tc);
    CLI::App* pr = app.add_subcommand("predict", "run inference, write JSON-lines");
    add_common(pr);
    CLI::App* ev = app.add_subcommand("evaluate", "score predictions against gold");
    add_common(ev);
    ev->add_option("--pred", pred_path, "predictions JSON-lines file")->required();
    CLI::App* be = app.add_subcommand("benchmark", "latency/query-count harness");
    add_common(be, true);
    CLI::App* fe = app.add_subcommand("featurize", "dump tokenization and patterns");
    add_common(fe);

    CLI11_PARSE(app, argc, argv);

    if (const char* threads = std::getenv("SPLITNER_THREADS"))
        kernels::set_threads(std::atoi(threads));

    try {
        if (gen->parsed()) return cmd_gen_synthetic(args);
        if (td->parsed()) return cmd_train_detector(args);
        if (tc->parsed()) return cmd_train_classifier(args);
        if (pr->parsed()) return cmd_predict(args);
        if (ev->parsed()) return cmd_evaluate(args, pred_path);
        if (be->parsed()) return cmd_benchmark(args);
        if (fe->parsed()) return cmd_featurize(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
