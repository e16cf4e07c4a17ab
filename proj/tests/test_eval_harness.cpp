#include <catch_amalgamated.hpp>

#include <set>

#include "distill_forge/corpus_ingest.hpp"
#include "distill_forge/eval_harness.hpp"
#include "oracles.hpp"

using namespace distill;

namespace {

std::vector<LabeledPair> numbered_dataset(std::size_t n) {
    std::vector<LabeledPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"doc-" + std::to_string(i), Source::CNNDM, "Document " + std::to_string(i) + ".",
                       "Summary " + std::to_string(i) + "."});
    }
    return out;
}

}  // namespace

TEST_CASE("test-set sampling is uniform without replacement and reproducible", "[eval]") {
    const auto dataset = numbered_dataset(10'000);
    const auto a = sample_test_set(dataset, 500, 42);
    const auto b = sample_test_set(dataset, 500, 42);
    const auto c = sample_test_set(dataset, 500, 43);
    REQUIRE(a.documents.size() == 500);
    CHECK_FALSE(a.warning);
    std::set<std::string> ids;
    for (const auto& d : a.documents) ids.insert(d.id);
    CHECK(ids.size() == 500);
    for (std::size_t i = 0; i < 500; ++i) CHECK(a.documents[i].id == b.documents[i].id);
    std::size_t same = 0;
    for (std::size_t i = 0; i < 500; ++i) same += a.documents[i].id == c.documents[i].id;
    CHECK(same < 10);

    // Rough uniformity: the sample mean index sits near the middle.
    double mean = 0.0;
    for (const auto& d : a.documents) mean += std::stod(d.id.substr(4));
    mean /= 500.0;
    CHECK(mean == Catch::Approx(4999.5).margin(400.0));
}

TEST_CASE("sampling warns when too few documents qualify", "[eval]") {
    const auto dataset = numbered_dataset(30);
    const auto all = sample_test_set(dataset, 100, 1);
    CHECK(all.warning);
    CHECK(all.documents.size() == 30);

    const auto none = sample_test_set(dataset, 5, 1, [](const LabeledPair&) { return false; });
    CHECK(none.warning);
    CHECK(none.documents.empty());

    const auto even = sample_test_set(dataset, 10, 1, [](const LabeledPair& p) { return std::stoi(p.id.substr(4)) % 2 == 0; });
    CHECK_FALSE(even.warning);
    REQUIRE(even.documents.size() == 10);
    for (const auto& d : even.documents) CHECK(std::stoi(d.id.substr(4)) % 2 == 0);
}

TEST_CASE("sampling can require English documents", "[eval]") {
    auto dataset = numbered_dataset(20);
    for (std::size_t i = 0; i < 20; i += 2) dataset[i].document = "文档内容测试";
    const auto english = [](const LabeledPair& p) { return is_english_enough(p.document, 0.7); };
    const auto picked = sample_test_set(dataset, 10, 3, english);
    CHECK_FALSE(picked.warning);
    for (const auto& d : picked.documents) CHECK(std::stoi(d.id.substr(4)) % 2 == 1);
}

TEST_CASE("scoring references against themselves gives one", "[eval]") {
    std::mt19937_64 rng(12);
    std::map<std::string, std::string> refs;
    for (int i = 0; i < 50; ++i) refs["r" + std::to_string(i)] = oracle::random_text(rng, 5 + rng() % 40);
    const auto result = score(refs, refs, "synthetic");
    CHECK(result.report.rouge2_f1_mean == 1.0);
    CHECK(result.report.rouge2_precision_mean == 1.0);
    CHECK(result.report.rouge2_recall_mean == 1.0);
    CHECK(result.report.n_docs == 50);
    CHECK(result.missing_ids.empty());
}

TEST_CASE("three-pair fixture matches hand and oracle values", "[eval]") {
    const std::map<std::string, std::string> cands{
        {"a", "The cat sat on the mat."}, {"b", "a b c"}, {"c", "x y"}};
    const std::map<std::string, std::string> refs{
        {"a", "the cat lay on the mat"}, {"b", "A B C D E"}, {"c", "y x"}};
    const auto result = score(cands, refs, "fixture", EvalSetting::Supervised);

    // a: 3 of 5 bigrams on each side; b: 2 of 2 against 2 of 4; c: none.
    CHECK(result.report.rouge2_f1_mean == Catch::Approx((0.6 + 2.0 / 3.0 + 0.0) / 3.0).margin(1e-9));
    CHECK(result.report.rouge2_precision_mean == Catch::Approx((0.6 + 1.0 + 0.0) / 3.0).margin(1e-9));
    CHECK(result.report.rouge2_recall_mean == Catch::Approx((0.6 + 0.5 + 0.0) / 3.0).margin(1e-9));

    double oracle_f1 = 0.0;
    for (const auto& [id, ref] : refs) {
        oracle_f1 += oracle::rouge(rouge::rouge_tokenize(cands.at(id)), rouge::rouge_tokenize(ref), 2).f1;
    }
    CHECK(std::abs(result.report.rouge2_f1_mean - oracle_f1 / 3.0) <= 1e-9);

    const json j = result;
    CHECK(j["setting"] == "Supervised");
    CHECK(j["n_docs"] == 3);
}

TEST_CASE("missing candidates score zero and order does not matter", "[eval]") {
    const std::map<std::string, std::string> refs{{"a", "one two three"}, {"b", "four five six"}};
    const auto partial = score({{"a", "one two three"}}, refs);
    CHECK(partial.report.rouge2_f1_mean == 0.5);
    CHECK(partial.missing_ids == std::vector<std::string>{"b"});

    // Undefined ROUGE-2 (single-token texts on both sides) contributes zero.
    const auto undefined = score({{"a", "one"}}, {{"a", "one"}});
    CHECK(undefined.report.rouge2_f1_mean == 0.0);

    std::mt19937_64 rng(4);
    std::vector<std::pair<std::string, std::string>> cand_pairs;
    std::map<std::string, std::string> many_refs;
    for (int i = 0; i < 40; ++i) {
        const auto id = "k" + std::to_string(i);
        many_refs[id] = oracle::random_text(rng, 20);
        cand_pairs.emplace_back(id, oracle::random_text(rng, 15));
    }
    const auto base = score(std::map<std::string, std::string>(cand_pairs.begin(), cand_pairs.end()), many_refs);
    std::shuffle(cand_pairs.begin(), cand_pairs.end(), rng);
    const auto shuffled = score(std::map<std::string, std::string>(cand_pairs.begin(), cand_pairs.end()), many_refs);
    CHECK(base.report.rouge2_f1_mean == shuffled.report.rouge2_f1_mean);
}

TEST_CASE("scoring rejects empty and unknown candidates", "[eval]") {
    CHECK_THROWS_AS(score({}, {{"a", "x y"}}), EmptyInput);
    CHECK_THROWS_AS(score({{"zzz", "x y"}}, {{"a", "x y"}}), InvalidData);
    CHECK(parse_eval_setting("FewshotPrefix") == EvalSetting::FewshotPrefix);
    CHECK_THROWS_AS(parse_eval_setting("fewshot"), InvalidParameter);
}
