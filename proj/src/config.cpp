#include "splitner/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace splitner {

Variant variant_from_string(const std::string& s) {
    if (s == "splitner_qa_qa") return Variant::kSplitQaQa;
    if (s == "splitner_nochar_qa") return Variant::kSplitNocharQa;
    if (s == "splitner_seqtag_qa") return Variant::kSplitSeqtagQa;
    if (s == "single_qa") return Variant::kSingleQa;
    if (s == "single_seqtag") return Variant::kSingleSeqtag;
    throw std::runtime_error(
        "unknown variant \"" + s +
        "\" (expected splitner_qa_qa, splitner_nochar_qa, splitner_seqtag_qa, single_qa, or "
        "single_seqtag)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::kSplitQaQa: return "splitner_qa_qa";
        case Variant::kSplitNocharQa: return "splitner_nochar_qa";
        case Variant::kSplitSeqtagQa: return "splitner_seqtag_qa";
        case Variant::kSingleQa: return "single_qa";
        case Variant::kSingleSeqtag: return "single_seqtag";
    }
    return "?";
}

bool is_split_variant(Variant v) {
    return v == Variant::kSplitQaQa || v == Variant::kSplitNocharQa ||
           v == Variant::kSplitSeqtagQa;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": \"" + v + "\" is not an integer");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const uint64_t r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": \"" + v + "\" is not an integer");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": \"" + v + "\" is not a number");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw std::runtime_error("config key " + key + ": \"" + v + "\" is not a boolean");
}

}  // namespace

void RunConfig::validate() const {
    variant_from_string(variant);
    if (batch_size < 1) throw std::runtime_error("batch_size must be >= 1");
    if (max_seq_len < 8) throw std::runtime_error("max_seq_len must be >= 8");
    if (epochs < 0) throw std::runtime_error("epochs must be >= 0");
    if (lr <= 0) throw std::runtime_error("lr must be positive");
    if (gamma <= 0) throw std::runtime_error("gamma must be positive");
    if (optimizer != "adam" && optimizer != "sgd")
        throw std::runtime_error("optimizer must be adam or sgd");
    if (dropout < 0 || dropout >= 1) throw std::runtime_error("dropout must be in [0,1)");
    if (eval_mode != "typed" && eval_mode != "untyped")
        throw std::runtime_error("eval_mode must be typed or untyped");
    if (synth_pool != "all" && synth_pool != "train" && synth_pool != "eval")
        throw std::runtime_error("synth_pool must be all, train, or eval");
    if (synth_density < 0) throw std::runtime_error("synth_density must be >= 0");
    if (synth_types < 1 || synth_types > 5)
        throw std::runtime_error("synth_types must be between 1 and 5");
    if (bench_runs < 1) throw std::runtime_error("bench_runs must be >= 1");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": expected key=value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": empty key");
        if (key == "variant") c.variant = value;
        else if (key == "question_text") c.question_text = value;
        else if (key == "batch_size") c.batch_size = parse_int(key, value);
        else if (key == "max_seq_len") c.max_seq_len = parse_int(key, value);
        else if (key == "epochs") c.epochs = parse_int(key, value);
        else if (key == "seed") c.seed = parse_u64(key, value);
        else if (key == "lr") c.lr = parse_double(key, value);
        else if (key == "gamma") c.gamma = parse_double(key, value);
        else if (key == "optimizer") c.optimizer = value;
        else if (key == "char_feature") c.char_feature = parse_bool(key, value);
        else if (key == "pattern_feature") c.pattern_feature = parse_bool(key, value);
        else if (key == "encoder_layers") c.encoder_layers = parse_int(key, value);
        else if (key == "encoder_heads") c.encoder_heads = parse_int(key, value);
        else if (key == "encoder_hidden") c.encoder_hidden = parse_int(key, value);
        else if (key == "encoder_ff") c.encoder_ff = parse_int(key, value);
        else if (key == "dropout") c.dropout = parse_double(key, value);
        else if (key == "vocab_size") c.vocab_size = parse_int(key, value);
        else if (key == "lowercase") c.lowercase = parse_bool(key, value);
        else if (key == "vocab_path") c.vocab_path = value;
        else if (key == "train_path") c.train_path = value;
        else if (key == "eval_path") c.eval_path = value;
        else if (key == "detector_checkpoint") c.detector_checkpoint = value;
        else if (key == "classifier_checkpoint") c.classifier_checkpoint = value;
        else if (key == "eval_mode") c.eval_mode = value;
        else if (key == "synth_sentences") c.synth_sentences = parse_int(key, value);
        else if (key == "synth_density") c.synth_density = parse_double(key, value);
        else if (key == "synth_types") c.synth_types = parse_int(key, value);
        else if (key == "synth_pool") c.synth_pool = value;
        else if (key == "bench_runs") c.bench_runs = parse_int(key, value);
        else
            throw std::runtime_error(origin + ": line " + std::to_string(line_no) +
                                     ": unknown config key \"" + key + "\"");
    }
    c.validate();
    return c;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(content, path);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "variant = " << c.variant << '\n';
    out << "question_text = " << c.question_text << '\n';
    out << "batch_size = " << c.batch_size << '\n';
    out << "max_seq_len = " << c.max_seq_len << '\n';
    out << "epochs = " << c.epochs << '\n';
    out << "seed = " << c.seed << '\n';
    out << "lr = " << c.lr << '\n';
    out << "gamma = " << c.gamma << '\n';
    out << "optimizer = " << c.optimizer << '\n';
    out << "char_feature = " << (c.char_feature ? "true" : "false") << '\n';
    out << "pattern_feature = " << (c.pattern_feature ? "true" : "false") << '\n';
    out << "encoder_layers = " << c.encoder_layers << '\n';
    out << "encoder_heads = " << c.encoder_heads << '\n';
    out << "encoder_hidden = " << c.encoder_hidden << '\n';
    out << "encoder_ff = " << c.encoder_ff << '\n';
    out << "dropout = " << c.dropout << '\n';
    out << "vocab_size = " << c.vocab_size << '\n';
    out << "lowercase = " << (c.lowercase ? "true" : "false") << '\n';
    out << "vocab_path = " << c.vocab_path << '\n';
    out << "train_path = " << c.train_path << '\n';
    out << "eval_path = " << c.eval_path << '\n';
    out << "detector_checkpoint = " << c.detector_checkpoint << '\n';
    out << "classifier_checkpoint = " << c.classifier_checkpoint << '\n';
    out << "eval_mode = " << c.eval_mode << '\n';
    out << "synth_sentences = " << c.synth_sentences << '\n';
    out << "synth_density = " << c.synth_density << '\n';
    out << "synth_types = " << c.synth_types << '\n';
    out << "synth_pool = " << c.synth_pool << '\n';
    out << "bench_runs = " << c.bench_runs << '\n';
    return out.str();
}

}  // namespace splitner
