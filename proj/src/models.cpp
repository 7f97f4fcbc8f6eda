#include "splitner/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "splitner/pattern.hpp"
#include "splitner/text.hpp"

namespace splitner {

namespace {

constexpr const char* kWhatIsPrefix = "What is ";

std::vector<std::string> tokenize_text(const std::string& text, const Vocab& v) {
    std::vector<std::string> pieces;
    for (const std::string& w : split_words(text))
        for (std::string& p : tokenize_word(w, v)) pieces.push_back(std::move(p));
    return pieces;
}

void append_piece(ModelInput& in, const std::string& piece, int id, int segment, int word,
                  bool first) {
    in.ids.push_back(id);
    in.segments.push_back(segment);
    in.attention.push_back(1);
    in.word_of.push_back(word);
    in.is_first.push_back(first ? 1 : 0);
    in.subtokens.push_back(piece);
}

SubtokenAlignment alignment_of(const ModelInput& in) {
    SubtokenAlignment a;
    a.subtokens = in.subtokens;
    a.word_of = in.word_of;
    a.is_first.assign(in.is_first.begin(), in.is_first.end());
    return a;
}

std::string mention_text(const Sentence& s, const Mention& span) {
    std::string text;
    for (int i = span.start; i <= span.end; ++i) {
        if (i > span.start) text += ' ';
        text += s.tokens[static_cast<size_t>(i)].text;
    }
    return text;
}

int argmax_row(const Tensor<float>& t, int row) {
    const int c = t.cols();
    const float* r = t.data.data() + static_cast<size_t>(row) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (r[j] > r[best]) best = j;
    return best;
}

}  // namespace

void ModelInput::pad_to(int len) {
    while (size() < len)
        append_piece(*this, kSpecialTokens[Vocab::kPad], Vocab::kPad, 0, -1, false);
    // appended positions must not attend or contribute to the loss
    for (int i = len - 1; i >= 0 && subtokens[static_cast<size_t>(i)] ==
                                        kSpecialTokens[Vocab::kPad];
         --i)
        attention[static_cast<size_t>(i)] = 0;
}

ModelInput build_detection_input(const Sentence& s, const std::string& question, const Vocab& v,
                                 int max_seq_len) {
    ModelInput in;
    append_piece(in, kSpecialTokens[Vocab::kCls], Vocab::kCls, 0, -1, false);
    for (const std::string& p : tokenize_text(question, v))
        append_piece(in, p, v.id(p), 0, -1, false);
    append_piece(in, kSpecialTokens[Vocab::kSep], Vocab::kSep, 0, -1, false);

    const int budget = max_seq_len - in.size() - 1;  // final [SEP]
    if (budget < 0)
        throw std::runtime_error("question alone exceeds max_seq_len " +
                                 std::to_string(max_seq_len));
    const SubtokenAlignment a = tokenize_sentence(s, v);
    int taken = 0;
    int kept_words = 0;
    for (int w = 0; w < s.size(); ++w) {
        int pieces = 0;
        for (int i = 0; i < a.size(); ++i)
            if (a.word_of[i] == w) ++pieces;
        if (taken + pieces > budget) break;
        taken += pieces;
        kept_words = w + 1;
    }
    for (int i = 0; i < a.size(); ++i) {
        if (a.word_of[i] >= kept_words) break;
        append_piece(in, a.subtokens[i], v.id(a.subtokens[i]), 1, a.word_of[i],
                     a.is_first[i] != 0);
    }
    append_piece(in, kSpecialTokens[Vocab::kSep], Vocab::kSep, 1, -1, false);
    in.n_words = kept_words;
    in.truncated = kept_words < s.size();
    return in;
}

ModelInput build_classification_input(const Sentence& s, const Mention& span, const Vocab& v,
                                      int max_seq_len) {
    if (span.start < 0 || span.end >= s.size() || span.start > span.end)
        throw std::runtime_error("span (" + std::to_string(span.start) + "," +
                                 std::to_string(span.end) + ") out of bounds for sentence " +
                                 s.id + " of " + std::to_string(s.size()) + " tokens");
    const std::string question = kWhatIsPrefix + mention_text(s, span) + "?";
    return build_detection_input(s, question, v, max_seq_len);
}

int64_t& encoder_input_count() {
    static int64_t count = 0;
    return count;
}

DetectorModel::DetectorModel(DetectorConfig cfg_, Vocab vocab_, uint64_t seed)
    : cfg(std::move(cfg_)),
      vocab(std::move(vocab_)),
      chars(char_vocab_from(vocab)),
      pattern_chars(pattern_vocab_from(vocab)),
      params(seed) {
    cfg.encoder.vocab_size = vocab.size();
    cfg.encoder.validate();
}

void DetectorModel::materialize() {
    Sentence probe;
    probe.tokens.push_back(Token{"a", 0});
    Rng rng(0);
    detector_forward(*this, build_detection_input(probe, cfg.question, vocab,
                                                  cfg.encoder.max_seq_len),
                     false, rng);
    --encoder_input_count();  // probe pass is bookkeeping, not a query
}

DetectorForward detector_forward(DetectorModel& m, const ModelInput& input, bool train,
                                 Rng& drop_rng) {
    ++encoder_input_count();
    DetectorForward fwd;
    Graph<float>& g = fwd.graph;
    const int H = m.cfg.encoder.hidden;
    auto x = encoder_forward(g, m.params, m.cfg.encoder, input.ids, input.segments,
                             input.attention, train, drop_rng);
    std::vector<Graph<float>::Ref> parts{x};
    int width = H;
    if (m.cfg.use_char) {
        parts.push_back(char_features(g, m.params, m.chars, input.subtokens, H));
        width += H;
    }
    if (m.cfg.use_pattern) {
        parts.push_back(pattern_features(g, m.params, m.pattern_chars,
                                         pattern_sequence(input.subtokens), H));
        width += pattern_feature_dim(H);
    }
    const auto features = parts.size() > 1 ? g.concat_cols(parts) : x;
    const int symbols = m.cfg.tag_symbols();
    const auto w = g.param(m.params.get("det.head.w", {width, symbols}, Init::kGlorot));
    const auto b = g.param(m.params.get("det.head.b", {symbols}, Init::kZero));
    fwd.logits = g.add_bias(g.matmul(features, w), b);
    fwd.probs = g.softmax_rows(fwd.logits);
    return fwd;
}

TagSequence detector_predict_tags(DetectorModel& m, const Sentence& s,
                                  const std::string& question) {
    const ModelInput input =
        build_detection_input(s, question, m.vocab, m.cfg.encoder.max_seq_len);
    Rng no_drop(0);
    DetectorForward fwd = detector_forward(m, input, false, no_drop);
    const Tensor<float>& probs = fwd.graph.val(fwd.probs);

    std::vector<int> first_pos(static_cast<size_t>(input.n_words), -1);
    for (int i = 0; i < input.size(); ++i)
        if (input.word_of[i] >= 0 && input.is_first[i])
            first_pos[static_cast<size_t>(input.word_of[i])] = i;

    TagSequence tags;
    for (int w = 0; w < s.size(); ++w) {
        Tag t;  // truncated words fall back to O
        if (w < input.n_words && first_pos[static_cast<size_t>(w)] >= 0)
            t = tag_from_id(argmax_row(probs, first_pos[static_cast<size_t>(w)]), m.cfg.types);
        tags.tags.push_back(std::move(t));
        tags.loss_mask.push_back(true);
    }
    return tags;
}

std::vector<Mention> detect_spans(DetectorModel& m, const Sentence& s) {
    return decode_tags(detector_predict_tags(m, s, m.cfg.question));
}

ClassifierModel::ClassifierModel(EncoderConfig encoder_, std::vector<std::string> types_,
                                 Vocab vocab_, uint64_t seed)
    : encoder(encoder_), types(std::move(types_)), vocab(std::move(vocab_)), params(seed) {
    if (types.empty()) throw std::runtime_error("classifier needs a non-empty type inventory");
    encoder.vocab_size = vocab.size();
    encoder.validate();
}

namespace {

struct ClassifierForward {
    Graph<float> graph;
    Graph<float>::Ref dist = -1;  // [1 x T]
};

ClassifierForward classifier_forward(ClassifierModel& m, const ModelInput& input, bool train,
                                     Rng& drop_rng) {
    ++encoder_input_count();
    ClassifierForward fwd;
    Graph<float>& g = fwd.graph;
    auto x = encoder_forward(g, m.params, m.encoder, input.ids, input.segments, input.attention,
                             train, drop_rng);
    const auto pooled = g.row(x, 0);  // CLS position
    const int T_ = static_cast<int>(m.types.size());
    const auto w = g.param(m.params.get("cls.head.w", {m.encoder.hidden, T_}, Init::kGlorot));
    const auto b = g.param(m.params.get("cls.head.b", {T_}, Init::kZero));
    fwd.dist = g.softmax_rows(g.add_bias(g.matmul(pooled, w), b));
    return fwd;
}

}  // namespace

void ClassifierModel::materialize() {
    Sentence probe;
    probe.tokens.push_back(Token{"a", 0});
    Rng rng(0);
    classifier_forward(*this, build_classification_input(probe, Mention{0, 0, types[0]}, vocab,
                                                         encoder.max_seq_len),
                       false, rng);
    --encoder_input_count();
}

ClassifyResult classify_span(ClassifierModel& m, const Sentence& s, const Mention& span) {
    const ModelInput input = build_classification_input(s, span, m.vocab, m.encoder.max_seq_len);
    Rng no_drop(0);
    ClassifierForward fwd = classifier_forward(m, input, false, no_drop);
    const Tensor<float>& dist = fwd.graph.val(fwd.dist);
    ClassifyResult r;
    r.distribution.assign(dist.data.begin(), dist.data.end());
    r.type_index = argmax_row(dist, 0);  // strict > keeps the lowest index on ties
    r.type = m.types[static_cast<size_t>(r.type_index)];
    return r;
}

std::string per_type_question(const std::string& entity_type) {
    return "Where is the " + ascii_tolower(entity_type) + " mentioned in the text?";
}

namespace {

struct DetectorSample {
    const Sentence* sentence = nullptr;
    std::string question;
    std::vector<Mention> mentions;  // teacher spans for this sample
    bool typed = false;
};

std::vector<Mention> untyped_copy(const std::vector<Mention>& ms) {
    std::vector<Mention> out;
    out.reserve(ms.size());
    for (const Mention& m : ms) out.push_back(Mention{m.start, m.end, kUntyped});
    return out;
}

}  // namespace

EpochResult train_detector_epoch(DetectorModel& m, const Dataset& data, Optimizer<float>& opt,
                                 int batch_size, Rng& order_rng, Rng& drop_rng,
                                 bool per_type_questions) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool typed = !m.cfg.types.empty();
    if (typed && per_type_questions)
        throw std::runtime_error("per-type questions require an untyped detector head");

    std::vector<DetectorSample> samples;
    for (const Sentence& s : data.sentences) {
        const auto git = data.gold.find(s.id);
        static const std::vector<Mention> kNone;
        const std::vector<Mention>& gold = git == data.gold.end() ? kNone : git->second;
        if (per_type_questions) {
            for (const std::string& type : data.type_inventory) {
                DetectorSample ds;
                ds.sentence = &s;
                ds.question = per_type_question(type);
                for (const Mention& g : gold)
                    if (g.entity_type == type) ds.mentions.push_back(Mention{g.start, g.end, kUntyped});
                samples.push_back(std::move(ds));
            }
        } else {
            DetectorSample ds;
            ds.sentence = &s;
            ds.question = m.cfg.question;
            ds.mentions = typed ? gold : untyped_copy(gold);
            ds.typed = typed;
            samples.push_back(std::move(ds));
        }
    }

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t done = 0;
    while (done < order.size()) {
        const size_t batch = std::min<size_t>(batch_size, order.size() - done);
        const float inv_batch = 1.0f / static_cast<float>(batch);
        for (size_t bi = 0; bi < batch; ++bi) {
            const DetectorSample& ds = samples[order[done + bi]];
            const Sentence& s = *ds.sentence;
            ModelInput input =
                build_detection_input(s, ds.question, m.vocab, m.cfg.encoder.max_seq_len);
            TagSequence word_tags = encode_tags(ds.mentions, s.size(), ds.typed);
            word_tags.tags.resize(static_cast<size_t>(input.n_words));
            word_tags.loss_mask.resize(static_cast<size_t>(input.n_words));
            const TagSequence sub_tags = align_labels(word_tags, alignment_of(input));

            std::vector<int> targets(sub_tags.tags.size());
            std::vector<uint8_t> mask(sub_tags.tags.size());
            for (size_t i = 0; i < sub_tags.tags.size(); ++i) {
                targets[i] = tag_to_id(sub_tags.tags[i], m.cfg.types);
                mask[i] = sub_tags.loss_mask[i] ? 1 : 0;
            }

            DetectorForward fwd = detector_forward(m, input, true, drop_rng);
            const auto loss =
                fwd.graph.cross_entropy(fwd.logits, std::move(targets), std::move(mask));
            const double lv = fwd.graph.scalar(loss);
            if (!std::isfinite(lv))
                throw std::runtime_error("training diverged: non-finite detector loss");
            loss_sum += lv;
            fwd.graph.backward(fwd.graph.scale(loss, inv_batch));
        }
        opt.step(m.params);
        done += batch;
    }

    EpochResult r;
    r.samples = static_cast<int64_t>(samples.size());
    r.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

EpochResult train_classifier_epoch(ClassifierModel& m, const Dataset& data,
                                   Optimizer<float>& opt, int batch_size, double gamma,
                                   Rng& order_rng, Rng& drop_rng) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Sample {
        const Sentence* sentence;
        Mention span;
        int type_index;
    };
    std::vector<Sample> samples;
    for (const Sentence& s : data.sentences) {
        const auto git = data.gold.find(s.id);
        if (git == data.gold.end()) continue;
        for (const Mention& g : git->second) {
            const auto it = std::find(m.types.begin(), m.types.end(), g.entity_type);
            if (it == m.types.end())
                throw std::runtime_error("mention type '" + g.entity_type +
                                         "' missing from classifier inventory");
            samples.push_back(Sample{&s, g, static_cast<int>(it - m.types.begin())});
        }
    }

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);

    const int T_ = static_cast<int>(m.types.size());
    double loss_sum = 0.0;
    size_t done = 0;
    while (done < order.size()) {
        const size_t batch = std::min<size_t>(batch_size, order.size() - done);
        const float inv_batch = 1.0f / static_cast<float>(batch);
        for (size_t bi = 0; bi < batch; ++bi) {
            const Sample& sm = samples[order[done + bi]];
            const ModelInput input = build_classification_input(*sm.sentence, sm.span, m.vocab,
                                                                m.encoder.max_seq_len);
            ClassifierForward fwd = classifier_forward(m, input, true, drop_rng);
            std::vector<float> onehot(static_cast<size_t>(T_), 0.0f);
            onehot[static_cast<size_t>(sm.type_index)] = 1.0f;
            const auto loss =
                fwd.graph.dice_loss(fwd.dist, std::move(onehot), static_cast<float>(gamma));
            const double lv = fwd.graph.scalar(loss);
            if (!std::isfinite(lv))
                throw std::runtime_error("training diverged: non-finite classifier loss");
            loss_sum += lv;
            fwd.graph.backward(fwd.graph.scale(loss, inv_batch));
        }
        opt.step(m.params);
        done += batch;
    }

    EpochResult r;
    r.samples = static_cast<int64_t>(samples.size());
    r.mean_loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<Mention> single_qa_infer(DetectorModel& m, const Sentence& s,
                                     const std::vector<std::string>& types) {
    struct Candidate {
        Mention mention;
        int type_index;
    };
    std::vector<Candidate> candidates;
    for (size_t ti = 0; ti < types.size(); ++ti) {
        const TagSequence tags = detector_predict_tags(m, s, per_type_question(types[ti]));
        for (const Mention& span : decode_tags(tags))
            candidates.push_back(
                Candidate{Mention{span.start, span.end, types[ti]}, static_cast<int>(ti)});
    }
    // Longest span first, then leftmost, then lowest type index.
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        const int la = a.mention.end - a.mention.start;
        const int lb = b.mention.end - b.mention.start;
        if (la != lb) return la > lb;
        if (a.mention.start != b.mention.start) return a.mention.start < b.mention.start;
        return a.type_index < b.type_index;
    });
    std::vector<Mention> accepted;
    for (const Candidate& c : candidates) {
        bool overlaps = false;
        for (const Mention& a : accepted)
            if (c.mention.start <= a.end && a.start <= c.mention.end) {
                overlaps = true;
                break;
            }
        if (!overlaps) accepted.push_back(c.mention);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

void save_model_meta(const std::string& path, const ModelMeta& meta) {
    for (const std::string& t : meta.types)
        if (t.find(',') != std::string::npos)
            throw std::runtime_error("type name '" + t + "' may not contain a comma");
    std::ostringstream out;
    out << "variant = " << meta.variant << '\n';
    out << "seed = " << meta.seed << '\n';
    out << "vocab_hash = " << meta.vocab_hash << '\n';
    out << "types = ";
    for (size_t i = 0; i < meta.types.size(); ++i) out << (i ? "," : "") << meta.types[i];
    out << '\n';
    std::istringstream cfg(meta.config_text);
    std::string line;
    while (std::getline(cfg, line)) out << "config." << line << '\n';
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << out.str();
    if (!f) throw std::runtime_error("write failed for " + path);
}

ModelMeta load_model_meta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    ModelMeta meta;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        if (key == "variant") {
            meta.variant = value;
        } else if (key == "seed") {
            meta.seed = std::stoull(value);
        } else if (key == "vocab_hash") {
            meta.vocab_hash = value;
        } else if (key == "types") {
            meta.types.clear();
            std::string item;
            std::istringstream items(value);
            while (std::getline(items, item, ','))
                if (!item.empty()) meta.types.push_back(item);
        } else if (key.compare(0, 7, "config.") == 0) {
            meta.config_text += key.substr(7) + "=" + value + '\n';
        } else {
            throw std::runtime_error(path + ": unknown metadata key \"" + key + "\"");
        }
    }
    return meta;
}

std::string vocab_fingerprint(const Vocab& v) {
    uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= '\n';
        h *= 1099511628211ull;
    };
    for (const std::string& e : v.entries) mix(e);
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace splitner
