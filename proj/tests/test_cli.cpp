#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "distill_forge/mixture.hpp"
#include "distill_forge/prompt_forge.hpp"
#include "oracles.hpp"

using namespace distill;
namespace fs = std::filesystem;

namespace {

const fs::path kData = DISTILL_FORGE_DATA_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string command =
        std::string("\"") + DISTILL_FORGE_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(command.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli help and usage errors", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_usage");
    CHECK(cli("--help", dir).code == 0);
    CHECK(cli("", dir).code == 2);
    CHECK(cli("frobnicate", dir).code == 2);
    CHECK(cli("rouge --candidate x", dir).code == 2);
}

TEST_CASE("cli rouge prints per-order scores", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_rouge");
    write_file(dir / "c.txt", "The cat sat on the mat.");
    write_file(dir / "r.txt", "the cat lay on the mat");
    const auto r = cli("rouge --candidate " + q(dir / "c.txt") + " --reference " + q(dir / "r.txt"), dir);
    CHECK(r.code == 0);
    CHECK(r.out ==
          "ROUGE-1 precision 0.8333 recall 0.8333 f1 0.8333\n"
          "ROUGE-2 precision 0.6000 recall 0.6000 f1 0.6000\n");

    write_file(dir / "empty.txt", "");
    CHECK(cli("rouge --candidate " + q(dir / "empty.txt") + " --reference " + q(dir / "empty.txt"), dir).code == 2);
    CHECK(cli("rouge --candidate " + q(dir / "missing.txt") + " --reference " + q(dir / "r.txt"), dir).code == 4);
    CHECK(cli("rouge --n 0 --candidate " + q(dir / "c.txt") + " --reference " + q(dir / "r.txt"), dir).code == 2);
}

TEST_CASE("cli render matches the library", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_render");
    const std::string doc = "A short document about tides.";
    write_file(dir / "doc.txt", doc);
    const auto& lib = TemplateLibrary::builtin();
    const auto r = cli("render --template ps05 --doc " + q(dir / "doc.txt"), dir);
    CHECK(r.code == 0);
    CHECK(r.out == render_zeroshot(lib.find("ps05"), doc).text);
    CHECK(r.err.find("template=ps05") != std::string::npos);

    const auto rnd = cli("render --template random:4 --doc " + q(dir / "doc.txt"), dir);
    CHECK(rnd.code == 0);
    CHECK(rnd.out == cli("render --template random:4 --doc " + q(dir / "doc.txt"), dir).out);

    write_jsonl(dir / "icds.jsonl", std::vector<LabeledPair>{{"i1", Source::CNNDM, "Icd doc one.", "Icd one."},
                                                             {"i2", Source::CNNDM, "Icd doc two.", "Icd two."}});
    const auto few = cli("render --mode fewshot --icds " + q(dir / "icds.jsonl") + " --doc " + q(dir / "doc.txt"), dir);
    CHECK(few.code == 0);
    const std::vector<DemonstrationPair> demos{make_demonstration("i1", "Icd doc one.", "Icd one.", 256),
                                               make_demonstration("i2", "Icd doc two.", "Icd two.", 256)};
    CHECK(few.out == render_fewshot(demos, doc, 4, 3072).text);

    CHECK(cli("render --mode fewshot --doc " + q(dir / "doc.txt"), dir).code == 2);
    CHECK(cli("render --template ps99 --doc " + q(dir / "doc.txt"), dir).code == 2);
    CHECK(cli("render --mode fewshot --budget 5 --icds " + q(dir / "icds.jsonl") + " --doc " + q(dir / "doc.txt"), dir)
              .code == 2);
}

TEST_CASE("cli stage commands chain together", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_stages");
    const auto general = kData / "mini_corpus/general.jsonl";
    const auto supervised = kData / "mini_corpus/supervised.jsonl";

    REQUIRE(cli("ingest --in " + q(general) + " --out " + q(dir / "docs.jsonl") + " --report " + q(dir / "report.json"),
                dir)
                .code == 0);
    CHECK(read_json(dir / "report.json")["input_count"] == 140);

    REQUIRE(cli("generate --mode m1 --docs " + q(dir / "docs.jsonl") + " --seed 3 --out " + q(dir / "m1.jsonl") +
                    " --record-dir " + q(dir / "fixtures"),
                dir)
                .code == 0);
    CHECK(load_records(dir / "m1.jsonl").size() > 100);

    // Replaying the recorded fixtures succeeds; an empty fixture dir exhausts the backend.
    CHECK(cli("generate --mode m1 --backend replay --replay-dir " + q(dir / "fixtures") + " --docs " +
                  q(dir / "docs.jsonl") + " --seed 3 --out " + q(dir / "m1-replay.jsonl"),
              dir)
              .code == 0);
    fs::create_directories(dir / "no-fixtures");
    CHECK(cli("generate --mode m1 --backend replay --max-retries 0 --replay-dir " + q(dir / "no-fixtures") +
                  " --docs " + q(dir / "docs.jsonl") + " --seed 3 --out " + q(dir / "m1-none.jsonl"),
              dir)
              .code == 3);
    CHECK(cli("generate --mode m2 --docs " + q(dir / "docs.jsonl") + " --seed 3 --out " + q(dir / "m2.jsonl"), dir)
              .code == 2);
    CHECK(cli("generate --mode m1 --docs " + q(dir / "absent.jsonl") + " --seed 3 --out " + q(dir / "x.jsonl"), dir)
              .code == 4);

    REQUIRE(cli("filter --records " + q(dir / "m1.jsonl") + " --docs " + q(dir / "docs.jsonl") + " --out " +
                    q(dir / "m1.filtered.jsonl") + " --report " + q(dir / "m1.report.json"),
                dir)
                .code == 0);
    const auto report = read_json(dir / "m1.report.json");
    CHECK(report["modes"]["M1"]["kept"].get<std::size_t>() + report["modes"]["M1"]["dropped"].get<std::size_t>() ==
          report["modes"]["M1"]["generated"].get<std::size_t>());

    REQUIRE(cli("generate --mode m4 --docs " + q(supervised) + " --seed 3 --out " + q(dir / "m4.jsonl"), dir).code == 0);
    REQUIRE(cli("filter --records " + q(dir / "m4.jsonl") + " --docs " + q(supervised) + " --out " +
                    q(dir / "m4.filtered.jsonl") + " --report " + q(dir / "m4.report.json"),
                dir)
                .code == 0);

    fs::create_directories(dir / "pools");
    REQUIRE(cli("pool --records " + q(dir / "m1.filtered.jsonl") + " --docs " + q(dir / "docs.jsonl") + " --out " +
                    q(dir / "pools/m1.jsonl"),
                dir)
                .code == 0);
    REQUIRE(cli("pool --records " + q(dir / "m4.filtered.jsonl") + " --docs " + q(supervised) + " --out " +
                    q(dir / "pools/m4.jsonl"),
                dir)
                .code == 0);

    // M2 with kept M1 outputs as its ICD pool.
    CHECK(cli("generate --mode m2 --docs " + q(dir / "docs.jsonl") + " --icds " + q(dir / "pools/m1.jsonl") +
                  " --seed 3 --out " + q(dir / "m2.jsonl"),
              dir)
              .code == 0);

    REQUIRE(cli("mix --pools " + q(dir / "pools") + " --weights 0.5,0,0.5,0,0 --n 50 --seed 1 --out " +
                    q(dir / "train.jsonl"),
                dir)
                .code == 0);
    const auto examples = load_examples(dir / "train.jsonl");
    REQUIRE(examples.size() == 50);
    for (const auto& e : examples) CHECK((e.mode == Mode::M1 || e.mode == Mode::M4));
    CHECK(cli("mix --pools " + q(dir / "pools") + " --n 50 --seed 1 --out " + q(dir / "bad.jsonl"), dir).code == 2);
    CHECK(cli("mix --pools " + q(dir / "pools") + " --weights 0.6,0,0.6,0,-0.2 --n 5 --seed 1 --out " +
                  q(dir / "bad.jsonl"),
              dir)
              .code == 2);
}

TEST_CASE("cli eval and sample", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_eval");
    const auto supervised = kData / "mini_corpus/supervised.jsonl";
    const auto sampled = cli("sample --dataset " + q(supervised) + " --n 10 --seed 5 --out " + q(dir / "test.jsonl"), dir);
    CHECK(sampled.code == 0);
    const auto test_set = load_pairs(dir / "test.jsonl");
    REQUIRE(test_set.size() == 10);
    CHECK(cli("sample --dataset " + q(supervised) + " --n 1000 --seed 5", dir).err.find("warning") != std::string::npos);

    std::vector<json> cands;
    for (const auto& p : test_set) cands.push_back({{"id", p.id}, {"summary", p.summary}});
    write_jsonl(dir / "cands.jsonl", cands);
    const auto r = cli("eval --candidates " + q(dir / "cands.jsonl") + " --references " + q(dir / "test.jsonl") +
                           " --dataset mini --out " + q(dir / "eval.json"),
                       dir);
    CHECK(r.code == 0);
    CHECK(read_json(dir / "eval.json")["rouge2_f1_mean"] == 1.0);
    CHECK(r.out.find("mini ROUGE-2 f1 1.0000") == 0);

    write_file(dir / "none.jsonl", "");
    CHECK(cli("eval --candidates " + q(dir / "none.jsonl") + " --references " + q(dir / "test.jsonl") +
                  " --dataset mini --out " + q(dir / "e.json"),
              dir)
              .code == 2);
}

TEST_CASE("cli run resumes after an injected failure", "[cli]") {
    const auto dir = oracle::fresh_dir("cli_run");
    auto config = read_json(kData / "pipeline.default.json");
    config["output_dir"] = (dir / "out").string();
    config["corpora"]["general"] = (kData / "mini_corpus/general.jsonl").string();
    config["corpora"]["supervised"] = (kData / "mini_corpus/supervised.jsonl").string();
    config["mixture"]["n"] = 100;
    write_json(dir / "config.json", config);

    const auto failed = cli("run --config " + q(dir / "config.json") + " --fail-after filter_m1", dir);
    CHECK(failed.code == 1);
    CHECK(failed.err.find("filter_m1") != std::string::npos);
    const auto resumed = cli("--config " + q(dir / "config.json"), dir);
    CHECK(resumed.code == 0);
    CHECK(resumed.err.find("skip generate_m1") != std::string::npos);
    CHECK(resumed.err.find("done filter_m1") != std::string::npos);
    CHECK(load_examples(dir / "out/mixture/train.jsonl").size() == 100);

    config["mixture"]["weights"] = {0.5, 0.5, 0.5, 0.0, 0.0};
    write_json(dir / "bad.json", config);
    CHECK(cli("run --config " + q(dir / "bad.json"), dir).code == 2);
}
