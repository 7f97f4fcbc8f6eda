#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "splitner/corpus.hpp"
#include "splitner/encoder.hpp"
#include "splitner/models.hpp"
#include "splitner/nn.hpp"
#include "splitner/subword.hpp"
#include "splitner/text.hpp"

using namespace splitner;

namespace {

Sentence sentence_of(const std::string& text, const std::string& id = "s0") {
    Sentence s;
    s.id = id;
    for (const std::string& w : split_words(text)) {
        Token t;
        t.text = w;
        t.index = s.size();
        s.tokens.push_back(t);
    }
    return s;
}

Dataset tiny_dataset() {
    Dataset d;
    d.sentences.push_back(sentence_of("emma moved to paris", "s0"));
    d.sentences.push_back(sentence_of("paris greeted emma warmly", "s1"));
    d.sentences.push_back(sentence_of("nothing happened today", "s2"));
    d.sentences.push_back(sentence_of("liu visited oslo in june", "s3"));
    d.gold["s0"] = {Mention{0, 0, "PER"}, Mention{3, 3, "LOC"}};
    d.gold["s1"] = {Mention{0, 0, "LOC"}, Mention{2, 2, "PER"}};
    d.gold["s2"] = {};
    d.gold["s3"] = {Mention{0, 0, "PER"}, Mention{2, 2, "LOC"}};
    d.type_inventory = {"LOC", "PER"};
    return d;
}

EncoderConfig small_encoder() {
    EncoderConfig e;
    e.layers = 1;
    e.heads = 2;
    e.hidden = 12;
    e.ff = 24;
    e.max_seq_len = 64;
    e.dropout = 0.0;
    return e;
}

const char* kQuestion = "Extract important entity spans from the following text";

}  // namespace

TEST_CASE("detection input frames question and sentence with segments") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    const Sentence s = sentence_of("emma moved to paris");
    const ModelInput in = build_detection_input(s, kQuestion, v, 64);

    CHECK(in.subtokens.front() == "[CLS]");
    CHECK(in.ids.front() == Vocab::kCls);
    CHECK(in.subtokens.back() == "[SEP]");
    CHECK(in.n_words == 4);
    CHECK(!in.truncated);

    // the region between [CLS] and the first [SEP] is the question, tokenized
    // word by word exactly as the sentence side would be
    std::vector<std::string> expected_q;
    for (const std::string& w : split_words(kQuestion))
        for (const std::string& p : tokenize_word(w, v)) expected_q.push_back(p);
    int sep1 = -1;
    for (int i = 0; i < in.size() && sep1 < 0; ++i)
        if (in.subtokens[static_cast<size_t>(i)] == "[SEP]") sep1 = i;
    CHECK(sep1 == 1 + static_cast<int>(expected_q.size()));
    for (int i = 1; i < sep1; ++i)
        CHECK(in.subtokens[static_cast<size_t>(i)] == expected_q[static_cast<size_t>(i - 1)]);

    for (int i = 0; i <= sep1; ++i) {
        CHECK(in.segments[static_cast<size_t>(i)] == 0);
        CHECK(in.word_of[static_cast<size_t>(i)] == -1);
        CHECK(in.is_first[static_cast<size_t>(i)] == 0);
    }
    std::vector<int> firsts;
    for (int i = sep1 + 1; i < in.size(); ++i) {
        CHECK(in.segments[static_cast<size_t>(i)] == 1);
        if (in.is_first[static_cast<size_t>(i)]) firsts.push_back(in.word_of[static_cast<size_t>(i)]);
    }
    CHECK(firsts == std::vector<int>{0, 1, 2, 3});
    for (uint8_t a : in.attention) CHECK(a == 1);
}

TEST_CASE("empty question keeps the frame but drops the question region") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    const Sentence s = sentence_of("emma moved");
    const ModelInput in = build_detection_input(s, "", v, 64);
    const SubtokenAlignment a = tokenize_sentence(s, v);

    CHECK(in.size() == 2 + a.size() + 1);
    CHECK(in.subtokens[0] == "[CLS]");
    CHECK(in.subtokens[1] == "[SEP]");
    CHECK(in.segments[0] == 0);
    CHECK(in.segments[1] == 0);
    for (int i = 2; i < in.size(); ++i) CHECK(in.segments[static_cast<size_t>(i)] == 1);
    CHECK(in.subtokens.back() == "[SEP]");
}

TEST_CASE("pad_to appends inert positions") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    ModelInput in = build_detection_input(sentence_of("emma moved"), "", v, 64);
    const int orig = in.size();
    in.pad_to(orig);  // no-op
    CHECK(in.size() == orig);

    in.pad_to(orig + 5);
    CHECK(in.size() == orig + 5);
    for (int i = 0; i < orig; ++i) CHECK(in.attention[static_cast<size_t>(i)] == 1);
    for (int i = orig; i < in.size(); ++i) {
        CHECK(in.subtokens[static_cast<size_t>(i)] == "[PAD]");
        CHECK(in.ids[static_cast<size_t>(i)] == Vocab::kPad);
        CHECK(in.attention[static_cast<size_t>(i)] == 0);
        CHECK(in.word_of[static_cast<size_t>(i)] == -1);
    }
}

TEST_CASE("truncation drops whole words from the right and sets the flag") {
    // vocab knows "ab" and single chars; "ccc" splits into three pieces
    Dataset d;
    d.sentences.push_back(sentence_of("ab c", "s0"));
    d.gold["s0"] = {};
    const Vocab v = build_vocab(d, 50);
    CHECK(tokenize_word("ccc", v).size() == 3);

    const Sentence s = sentence_of("ab ab ccc");
    // frame [CLS][SEP]...[SEP] of max 7 leaves a budget of 4 pieces: both "ab"
    // fit, "ccc" would need three more, so it is dropped whole
    const ModelInput in = build_detection_input(s, "", v, 7);
    CHECK(in.n_words == 2);
    CHECK(in.truncated);
    CHECK(in.size() == 5);
    CHECK(in.subtokens == std::vector<std::string>{"[CLS]", "[SEP]", "ab", "ab", "[SEP]"});

    const ModelInput whole = build_detection_input(s, "", v, 64);
    CHECK(whole.n_words == 3);
    CHECK(!whole.truncated);
}

TEST_CASE("a question that cannot fit raises instead of truncating") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    CHECK_THROWS_WITH_AS(
        build_detection_input(sentence_of("emma"), "a b c d e f g h", v, 4),
        doctest::Contains("question alone exceeds"), std::runtime_error);
}

TEST_CASE("classification input asks about the mention text") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    const Sentence s = sentence_of("emma moved to paris");

    const ModelInput got = build_classification_input(s, Mention{0, 0, "PER"}, v, 64);
    const ModelInput want = build_detection_input(s, "What is emma?", v, 64);
    CHECK(got.ids == want.ids);
    CHECK(got.segments == want.segments);

    const ModelInput multi = build_classification_input(s, Mention{2, 3, "LOC"}, v, 64);
    const ModelInput want2 = build_detection_input(s, "What is to paris?", v, 64);
    CHECK(multi.ids == want2.ids);

    for (const Mention bad : {Mention{1, 0, ""}, Mention{0, 4, ""}, Mention{-1, 0, ""}})
        CHECK_THROWS_WITH_AS(build_classification_input(s, bad, v, 64),
                             doctest::Contains("out of bounds"), std::runtime_error);
}

TEST_CASE("attended encoder outputs are bitwise unchanged by padding") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    EncoderConfig cfg = small_encoder();
    cfg.vocab_size = v.size();

    ModelInput in = build_detection_input(sentence_of("emma moved to paris"), kQuestion, v, 64);
    ModelInput padded = in;
    padded.pad_to(in.size() + 7);

    ParamStore<float> ps(5);
    Rng r1(0), r2(0);
    Graph<float> g1, g2;
    const auto a = g1.val(
        encoder_forward(g1, ps, cfg, in.ids, in.segments, in.attention, false, r1));
    const auto b = g2.val(encoder_forward(g2, ps, cfg, padded.ids, padded.segments,
                                          padded.attention, false, r2));
    CHECK(b.rows() == in.size() + 7);
    for (int i = 0; i < in.size(); ++i)
        for (int j = 0; j < cfg.hidden; ++j) CHECK(a.at(i, j) == b.at(i, j));
}

TEST_CASE("detector forward yields per-position distributions, deterministically") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    cfg.question = kQuestion;
    DetectorModel m(cfg, v, 17);
    m.materialize();

    const ModelInput in = build_detection_input(d.sentences[0], cfg.question, v, 64);
    Rng r1(0), r2(0);
    DetectorForward f1 = detector_forward(m, in, false, r1);
    DetectorForward f2 = detector_forward(m, in, false, r2);
    const Tensor<float>& p1 = f1.graph.val(f1.probs);
    const Tensor<float>& p2 = f2.graph.val(f2.probs);

    CHECK(p1.shape == std::vector<int>{in.size(), 4});
    for (int i = 0; i < p1.rows(); ++i) {
        float sum = 0.f;
        for (int j = 0; j < 4; ++j) sum += p1.at(i, j);
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-4));
    }
    CHECK(p1.data == p2.data);

    DetectorConfig plain = cfg;
    plain.use_char = false;
    plain.use_pattern = false;
    DetectorModel mp(plain, v, 17);
    mp.materialize();
    DetectorForward f3 = detector_forward(mp, in, false, r1);
    CHECK(f3.graph.val(f3.probs).shape == std::vector<int>{in.size(), 4});
    CHECK(!mp.params.has("char.embed"));
    CHECK(!mp.params.has("pattern.embed"));
}

TEST_CASE("feature switches account for every extra parameter") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig base;
    base.encoder = small_encoder();
    base.question = kQuestion;
    base.use_char = false;
    base.use_pattern = false;
    DetectorConfig full = base;
    full.use_char = true;
    full.use_pattern = true;

    DetectorModel mb(base, v, 3);
    mb.materialize();
    DetectorModel mf(full, v, 3);
    mf.materialize();

    int64_t feature_params = 0;
    mf.params.for_each([&](const std::string& name, Tensor<float>& t) {
        if (name.rfind("char.", 0) == 0 || name.rfind("pattern.", 0) == 0)
            feature_params += static_cast<int64_t>(t.numel());
    });
    const int H = base.encoder.hidden;
    const int64_t extra_head = static_cast<int64_t>(H + pattern_feature_dim(H)) * 4;
    CHECK(mf.params.param_count() == mb.params.param_count() + feature_params + extra_head);

    CHECK(mb.params.at("det.head.w").shape == std::vector<int>{H, 4});
    CHECK(mf.params.at("det.head.w").shape ==
          std::vector<int>{H + H + pattern_feature_dim(H), 4});
}

TEST_CASE("materialize creates all parameters once, without counting a query") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    cfg.question = kQuestion;
    DetectorModel m(cfg, v, 9);
    CHECK(m.params.names().empty());

    const int64_t before = encoder_input_count();
    m.materialize();
    CHECK(encoder_input_count() == before);

    for (const char* n : {"enc.tok.embed", "enc.l0.attn.wq", "char.embed", "pattern.embed",
                          "det.head.w", "det.head.b"})
        CHECK(m.params.has(n));
    const int64_t count = m.params.param_count();
    m.materialize();
    CHECK(m.params.param_count() == count);
}

TEST_CASE("a rigged head shows tag decoding, truncation padding, and counting") {
    Dataset d;
    d.sentences.push_back(sentence_of("ab c", "s0"));
    d.gold["s0"] = {};
    const Vocab v = build_vocab(d, 50);

    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    cfg.encoder.max_seq_len = 7;
    cfg.question = "";
    DetectorModel m(cfg, v, 1);
    m.materialize();
    // force every position to tag B regardless of the input
    m.params.at("det.head.w").fill(0.f);
    Tensor<float>& b = m.params.at("det.head.b");
    b.fill(0.f);
    b.data[1] = 50.f;

    const Sentence s = sentence_of("ab ab ccc");  // third word gets truncated
    const int64_t before = encoder_input_count();
    const TagSequence tags = detector_predict_tags(m, s, "");
    CHECK(encoder_input_count() == before + 1);
    CHECK(tags.size() == 3);
    CHECK(tags.tags[0] == Tag{TagSym::B, ""});
    CHECK(tags.tags[1] == Tag{TagSym::B, ""});
    CHECK(tags.tags[2] == Tag{TagSym::O, ""});  // truncated word falls back to O

    const std::vector<Mention> spans = detect_spans(m, s);
    CHECK(spans == std::vector<Mention>{Mention{0, 0, ""}, Mention{1, 1, ""}});
}

TEST_CASE("typed detector heads keep their types through span decoding") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    cfg.question = "";
    cfg.types = {"LOC", "PER"};
    CHECK(cfg.tag_symbols() == 7);
    DetectorModel m(cfg, v, 1);
    m.materialize();
    m.params.at("det.head.w").fill(0.f);
    Tensor<float>& b = m.params.at("det.head.b");
    b.fill(0.f);
    b.data[1 + 3 * 1] = 50.f;  // B of the second type

    const std::vector<Mention> spans = detect_spans(m, sentence_of("emma moved"));
    CHECK(spans == std::vector<Mention>{Mention{0, 0, "PER"}, Mention{1, 1, "PER"}});
}

TEST_CASE("single-model inference asks one question per type and prunes overlaps") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    DetectorModel m(cfg, v, 1);
    m.materialize();
    m.params.at("det.head.w").fill(0.f);
    Tensor<float>& b = m.params.at("det.head.b");
    b.fill(0.f);
    b.data[1] = 50.f;  // all positions B -> every type proposes every token

    const Sentence s = sentence_of("emma moved to paris");
    const int64_t before = encoder_input_count();
    const std::vector<Mention> spans = single_qa_infer(m, s, {"LOC", "PER"});
    CHECK(encoder_input_count() == before + 2);  // one query per type

    // identical candidates from both types: equal length and start, so the
    // lower type index wins every tie and overlaps are pruned
    CHECK(spans.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(spans[static_cast<size_t>(i)] == Mention{i, i, "LOC"});
}

TEST_CASE("per-type questions lowercase the type name") {
    CHECK(per_type_question("PER") == "Where is the per mentioned in the text?");
    CHECK(per_type_question("CREATIVE-WORK") ==
          "Where is the creative-work mentioned in the text?");
}

TEST_CASE("classifier ties resolve to the lowest type index") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    ClassifierModel m(small_encoder(), {"PER", "LOC", "MISC"}, v, 2);
    m.materialize();
    m.params.at("cls.head.w").fill(0.f);
    m.params.at("cls.head.b").fill(0.f);  // all-equal logits -> uniform scores

    const int64_t before = encoder_input_count();
    const ClassifyResult r = classify_span(m, sentence_of("emma moved"), Mention{0, 0, ""});
    CHECK(encoder_input_count() == before + 1);
    CHECK(r.type_index == 0);
    CHECK(r.type == "PER");
    CHECK(r.distribution.size() == 3);
    float sum = 0.f;
    for (float p : r.distribution) {
        CHECK(p == doctest::Approx(1.0f / 3.0f).epsilon(1e-5));
        sum += p;
    }
    CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));

    CHECK_THROWS_AS(ClassifierModel(small_encoder(), {}, v, 2), std::runtime_error);
}

TEST_CASE("detector training lowers the loss and counts samples") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    cfg.question = kQuestion;
    DetectorModel m(cfg, v, 7);

    OptimizerConfig oc;
    oc.lr = 5e-3;
    Optimizer<float> opt(oc);
    Rng order(1), drop(2);
    std::vector<double> losses;
    for (int e = 0; e < 6; ++e) {
        const EpochResult r = train_detector_epoch(m, d, opt, 2, order, drop);
        CHECK(r.samples == 4);
        CHECK(std::isfinite(r.mean_loss));
        losses.push_back(r.mean_loss);
    }
    // untrained per-position scores start near uniform over the four symbols
    CHECK(losses.front() == doctest::Approx(std::log(4.0)).epsilon(0.4));
    CHECK(losses.back() < losses.front());
}

TEST_CASE("per-type training multiplies samples; typed heads reject it") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    DetectorConfig cfg;
    cfg.encoder = small_encoder();
    DetectorModel m(cfg, v, 7);
    OptimizerConfig oc;
    Optimizer<float> opt(oc);
    Rng order(1), drop(2);
    const EpochResult r = train_detector_epoch(m, d, opt, 4, order, drop, true);
    CHECK(r.samples == 8);  // 4 sentences x 2 types

    DetectorConfig typed = cfg;
    typed.types = {"LOC", "PER"};
    DetectorModel mt(typed, v, 7);
    CHECK_THROWS_WITH_AS(train_detector_epoch(mt, d, opt, 4, order, drop, true),
                         doctest::Contains("untyped"), std::runtime_error);
}

TEST_CASE("classifier training lowers the loss; unknown types are an error") {
    const Dataset d = tiny_dataset();
    const Vocab v = build_vocab(d, 200);
    ClassifierModel m(small_encoder(), d.type_inventory, v, 7);
    OptimizerConfig oc;
    oc.lr = 5e-3;
    Optimizer<float> opt(oc);
    Rng order(1), drop(2);
    std::vector<double> losses;
    for (int e = 0; e < 6; ++e) {
        const EpochResult r = train_classifier_epoch(m, d, opt, 2, 1.0, order, drop);
        CHECK(r.samples == 6);
        CHECK(r.mean_loss >= 0.0);
        CHECK(r.mean_loss < 1.0);
        losses.push_back(r.mean_loss);
    }
    CHECK(losses.back() < losses.front());

    Dataset bad = d;
    bad.gold["s2"] = {Mention{0, 0, "MISC"}};
    CHECK_THROWS_WITH_AS(train_classifier_epoch(m, bad, opt, 2, 1.0, order, drop),
                         doctest::Contains("MISC"), std::runtime_error);
}

TEST_CASE("model metadata survives a save/load round trip") {
    ModelMeta meta;
    meta.variant = "splitner_qa_qa";
    meta.types = {"CORP", "GRP"};
    meta.seed = 1234567890123ull;
    meta.vocab_hash = "deadbeef01";
    meta.config_text = "hidden = 64\nquestion = What else?\n";
    const std::string path = "meta_roundtrip.tmp";
    save_model_meta(path, meta);
    const ModelMeta back = load_model_meta(path);
    CHECK(back.variant == meta.variant);
    CHECK(back.types == meta.types);
    CHECK(back.seed == meta.seed);
    CHECK(back.vocab_hash == meta.vocab_hash);
    CHECK(back.config_text.find("hidden") != std::string::npos);
    CHECK(back.config_text.find("What else?") != std::string::npos);
    std::remove(path.c_str());

    ModelMeta comma = meta;
    comma.types = {"A,B"};
    CHECK_THROWS_AS(save_model_meta("never_written.tmp", comma), std::runtime_error);

    std::ofstream f("meta_bad.tmp");
    f << "mystery = 1\n";
    f.close();
    CHECK_THROWS_WITH_AS(load_model_meta("meta_bad.tmp"),
                         doctest::Contains("unknown metadata key"), std::runtime_error);
    std::remove("meta_bad.tmp");

    CHECK_THROWS_AS(load_model_meta("does_not_exist.meta"), std::runtime_error);
}

TEST_CASE("vocab fingerprints are stable and collision-averse") {
    const Dataset d = tiny_dataset();
    const Vocab a = build_vocab(d, 200);
    const Vocab b = build_vocab(d, 200);
    CHECK(vocab_fingerprint(a) == vocab_fingerprint(b));

    Vocab c = a;
    c.entries.push_back("zzz");
    CHECK(vocab_fingerprint(c) != vocab_fingerprint(a));
    Vocab e = a;
    e.entries.back() += "x";
    CHECK(vocab_fingerprint(e) != vocab_fingerprint(a));
}
