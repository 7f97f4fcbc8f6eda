#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const char* binary() {
    const char* bin = std::getenv("SPLITNER_BIN");
    REQUIRE_MESSAGE(bin != nullptr, ("SPLITNER_BIN must point at the CLI binary"));
    return bin;
}

const fs::path& workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::current_path() / "cli_work";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// Runs the CLI inside the scratch directory, capturing stdout+stderr.
int run_cli(const std::string& args, const std::string& log_name) {
    const std::string cmd = "cd \"" + workdir().string() + "\" && \"" +
                            std::string(binary()) + "\" " + args + " > " + log_name +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE_MESSAGE(f.good(), ("missing file: " + p.string()));
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string log_of(const std::string& log_name) { return slurp(workdir() / log_name); }

void write_cfg(const std::string& name, const std::string& body) {
    std::ofstream f(workdir() / name, std::ios::binary | std::ios::trunc);
    f << body;
    REQUIRE(f.good());
}

const char* kModelLines =
    "epochs = 1\n"
    "batch_size = 8\n"
    "lr = 0.001\n"
    "encoder_layers = 1\n"
    "encoder_heads = 2\n"
    "encoder_hidden = 16\n"
    "encoder_ff = 32\n"
    "max_seq_len = 64\n"
    "vocab_size = 300\n"
    "dropout = 0.1\n";

}  // namespace

TEST_CASE("generate, train, predict, evaluate round trip") {
    write_cfg("gen.cfg",
              "seed = 7\n"
              "synth_sentences = 12\n"
              "synth_density = 1.5\n"
              "synth_types = 2\n");
    REQUIRE(run_cli("gen-synthetic --config gen.cfg --out corpus", "gen.log") == 0);
    CHECK(fs::exists(workdir() / "corpus/synthetic.conll"));
    CHECK(fs::exists(workdir() / "corpus/config.txt"));

    write_cfg("train.cfg", std::string("seed = 7\n") + kModelLines +
                               "train_path = corpus/synthetic.conll\n");
    REQUIRE(run_cli("train-detector --config train.cfg --out det", "det.log") == 0);
    for (const char* f : {"det/vocab.txt", "det/detector.ckpt", "det/detector.ckpt.meta",
                          "det/detector_loss.tsv", "det/config.txt"})
        CHECK(fs::exists(workdir() / f));
    CHECK(slurp(workdir() / "det/config.txt").find("det/vocab.txt") != std::string::npos);
    CHECK(slurp(workdir() / "det/detector.ckpt.meta").find("variant = splitner_qa_qa") !=
          std::string::npos);
    // one loss line per epoch: "<epoch>\t<loss>"
    const std::string loss = slurp(workdir() / "det/detector_loss.tsv");
    CHECK(loss.rfind("0\t", 0) == 0);

    write_cfg("cls.cfg", std::string("seed = 7\n") + kModelLines +
                             "train_path = corpus/synthetic.conll\n"
                             "vocab_path = det/vocab.txt\n");
    REQUIRE(run_cli("train-classifier --config cls.cfg --out cls", "cls.log") == 0);
    CHECK(fs::exists(workdir() / "cls/classifier.ckpt"));
    CHECK(fs::exists(workdir() / "cls/classifier_loss.tsv"));

    write_cfg("pred.cfg", std::string("seed = 7\n") + kModelLines +
                              "eval_path = corpus/synthetic.conll\n"
                              "vocab_path = det/vocab.txt\n"
                              "detector_checkpoint = det/detector.ckpt\n"
                              "classifier_checkpoint = cls/classifier.ckpt\n");
    REQUIRE(run_cli("predict --config pred.cfg --out preds", "pred.log") == 0);
    const std::string jsonl = slurp(workdir() / "preds/predictions.jsonl");
    std::istringstream lines(jsonl);
    std::string line;
    int n_lines = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("id"));
        CHECK(j.contains("tokens"));
        CHECK(j.contains("mentions"));
        for (const auto& m : j["mentions"]) {
            CHECK(m.contains("start"));
            CHECK(m.contains("end"));
            CHECK(m.contains("type"));
            CHECK(m.contains("score"));
        }
        ++n_lines;
    }
    CHECK(n_lines == 12);

    REQUIRE(run_cli("evaluate --config pred.cfg --pred preds/predictions.jsonl --out eval",
                    "eval.log") == 0);
    CHECK(log_of("eval.log").find("micro-F1") != std::string::npos);
    CHECK(fs::exists(workdir() / "eval/eval.txt"));
    const auto ej = nlohmann::json::parse(slurp(workdir() / "eval/eval.json"));
    CHECK(ej["mode"].get<std::string>() == "typed");
    CHECK(ej["overall"].contains("f1"));
}

TEST_CASE("training is reproducible per seed and moved by the seed override") {
    // depends on the corpus and configs from the round-trip case
    REQUIRE(fs::exists(workdir() / "corpus/synthetic.conll"));
    REQUIRE(run_cli("train-detector --config train.cfg --out det_b", "det_b.log") == 0);
    CHECK(slurp(workdir() / "det_b/detector_loss.tsv") ==
          slurp(workdir() / "det/detector_loss.tsv"));
    CHECK(slurp(workdir() / "det_b/detector.ckpt") == slurp(workdir() / "det/detector.ckpt"));

    REQUIRE(run_cli("train-detector --config train.cfg --out det_c --seed 999",
                    "det_c.log") == 0);
    CHECK(slurp(workdir() / "det_c/detector_loss.tsv") !=
          slurp(workdir() / "det/detector_loss.tsv"));
    CHECK(slurp(workdir() / "det_c/config.txt").find("seed = 999") != std::string::npos);
}

TEST_CASE("featurize dumps tokenization next to the shape patterns") {
    REQUIRE(fs::exists(workdir() / "corpus/synthetic.conll"));
    write_cfg("feat.cfg",
              "eval_path = corpus/synthetic.conll\n"
              "vocab_path = det/vocab.txt\n");
    REQUIRE(run_cli("featurize --config feat.cfg", "feat.log") == 0);
    const std::string out = log_of("feat.log");
    CHECK(out.find("# s0") != std::string::npos);
    CHECK(out.find('\t') != std::string::npos);

    REQUIRE(run_cli("featurize --config feat.cfg --out feat", "feat2.log") == 0);
    CHECK(fs::exists(workdir() / "feat/featurize.txt"));
    CHECK(slurp(workdir() / "feat/featurize.txt") == out);
}

TEST_CASE("benchmark covers all five variants and writes both renderings") {
    REQUIRE(fs::exists(workdir() / "corpus/synthetic.conll"));
    write_cfg("bench.cfg", std::string("seed = 7\n") + kModelLines +
                               "train_path = corpus/synthetic.conll\n"
                               "eval_path = corpus/synthetic.conll\n"
                               "bench_runs = 2\n");
    REQUIRE(run_cli("benchmark --config bench.cfg --out bench --runs 1", "bench.log") == 0);
    const auto j = nlohmann::json::parse(slurp(workdir() / "bench/bench.json"));
    CHECK(j["rows"].size() == 5);
    CHECK(j["runs"].get<int>() == 1);  // --runs overrides the config value
    CHECK(slurp(workdir() / "bench/bench.txt").find("single_seqtag") != std::string::npos);
}

TEST_CASE("bad invocations fail loudly") {
    write_cfg("bad.cfg", "bogus_key = 1\n");
    CHECK(run_cli("gen-synthetic --config bad.cfg --out nowhere", "bad.log") != 0);
    CHECK(log_of("bad.log").find("bogus_key") != std::string::npos);

    CHECK(run_cli("evaluate --config pred.cfg", "nopred.log") != 0);  // --pred required
    CHECK(run_cli("train-detector --config train.cfg --out x --runs 3", "noruns.log") != 0);

    write_cfg("mismatch.cfg", std::string("seed = 7\n") + kModelLines +
                                  "variant = single_seqtag\n"
                                  "eval_path = corpus/synthetic.conll\n"
                                  "vocab_path = det/vocab.txt\n"
                                  "detector_checkpoint = det/detector.ckpt\n");
    CHECK(run_cli("predict --config mismatch.cfg --out mm", "mm.log") != 0);
    CHECK(log_of("mm.log").find("mismatch") != std::string::npos);

    CHECK(run_cli("train-detector --config missing.cfg --out x2", "miss.log") != 0);
    CHECK(run_cli("no-such-command --config train.cfg", "nosub.log") != 0);
}
