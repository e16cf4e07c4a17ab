#include <catch_amalgamated.hpp>

#include <map>
#include <set>

#include "distill_forge/mixture.hpp"
#include "oracles.hpp"

using namespace distill;

namespace {

PoolExample pool_example(Mode m, std::size_t icds, const std::string& id = "e") {
    PoolExample e;
    e.id = id;
    e.mode = m;
    e.doc_id = id + "-doc";
    e.document = "Target document for " + id + ". " + oracle::numbered_words(30, "t");
    e.template_id = mode_spec(m).fewshot() ? kFollowingId : "ps07";
    for (std::size_t i = 0; i < icds; ++i) {
        e.icds.push_back({id + "-icd" + std::to_string(i), Source::CNNDM,
                          oracle::numbered_words(300, "d" + std::to_string(i) + "x"),
                          oracle::numbered_words(280, "s" + std::to_string(i) + "x")});
    }
    e.target = "The target summary for " + id + ".";
    return e;
}

std::size_t recorded_icds(Mode m) {
    switch (mode_spec(m).icd_count_rule) {
        case IcdCountRule::Zero: return 0;
        case IcdCountRule::One: return 1;
        case IcdCountRule::UpToFour: return 4;
    }
    return 0;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto at = haystack.find(needle); at != std::string::npos; at = haystack.find(needle, at + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("balanced conversion covers exactly the legal ICD counts", "[mixture]") {
    const std::map<Mode, std::set<std::size_t>> legal{{Mode::M1, {0}},          {Mode::M2, {0, 1}},
                                                      {Mode::M3, {0, 1}},       {Mode::M4, {0}},
                                                      {Mode::M5, {0, 1, 2, 3, 4}}, {Mode::M6, {1, 2, 3, 4}}};
    for (Mode m : kAllModes) {
        CAPTURE(to_string(m));
        const auto e = pool_example(m, recorded_icds(m));
        Rng rng(derive_seed(1, mode_number(m)));
        std::set<std::size_t> seen;
        for (int i = 0; i < 2000; ++i) {
            const auto out = to_balanced(e, rng);
            seen.insert(out.icd_count);
            REQUIRE(out.target_text == e.target);
            REQUIRE(out.variant == Variant::Balanced);
            if (out.icd_count > 0) REQUIRE(count_occurrences(out.input_text, "Document: ") == out.icd_count + 1);
        }
        CHECK(seen == legal.at(m));
        const auto sorted = legal_icd_counts(m);
        CHECK(std::set<std::size_t>(sorted.begin(), sorted.end()) == legal.at(m));
    }
}

TEST_CASE("balanced M2 draws zero ICDs half the time", "[mixture][statistics]") {
    const auto e = pool_example(Mode::M2, 1);
    Rng rng(77);
    std::size_t zeros = 0;
    constexpr int kDraws = 10'000;
    for (int i = 0; i < kDraws; ++i) zeros += to_balanced(e, rng).icd_count == 0;
    CHECK(static_cast<double>(zeros) / kDraws == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("balanced zero-ICD renders use an instruction template", "[mixture]") {
    const auto& lib = TemplateLibrary::builtin();
    const auto m1 = pool_example(Mode::M1, 0);
    Rng rng(3);
    CHECK(to_balanced(m1, rng).input_text == render_zeroshot(lib.find("ps07"), m1.document).text);

    const auto m3 = pool_example(Mode::M3, 1);
    for (int i = 0; i < 200; ++i) {
        const auto out = to_balanced(m3, rng);
        if (out.icd_count != 0) continue;
        bool matches_some_template = false;
        for (const auto& t : lib.instructions()) matches_some_template |= out.input_text == render_zeroshot(t, m3.document).text;
        CHECK(matches_some_template);
    }
}

TEST_CASE("balanced M6 never drops to zero and rejects empty ICDs", "[mixture]") {
    Rng rng(8);
    for (std::size_t k = 1; k <= 4; ++k) {
        const auto e = pool_example(Mode::M6, k);
        for (int i = 0; i < 500; ++i) {
            const auto n = to_balanced(e, rng).icd_count;
            CHECK(n >= 1);
            CHECK(n <= k);
        }
    }
    CHECK_THROWS_AS(to_balanced(pool_example(Mode::M6, 0), rng), InvalidData);
}

TEST_CASE("consistent conversion reproduces the generation-time input", "[mixture]") {
    for (Mode m : kAllModes) {
        const auto e = pool_example(m, recorded_icds(m));
        const auto out = to_consistent(e);
        CHECK(out.icd_count == e.icds.size());
        CHECK(out.target_text == e.target);
        CHECK(out.variant == Variant::Consistent);
        if (mode_spec(m).succinct() && !e.icds.empty()) {
            CHECK(out.input_text.find("<omitted, 300 words in total>") != std::string::npos);
        } else {
            CHECK(out.input_text.find("<omitted") == std::string::npos);
        }
    }
}

TEST_CASE("mixture specs validate their weights", "[mixture]") {
    CHECK_NOTHROW(MixtureSpec{}.validate());
    const std::vector<double> bad_sum{0.5, 0.1, 0.1, 0.1, 0.1};
    CHECK_THROWS_AS(MixtureSpec::from_list(bad_sum), ConfigurationError);
    const std::vector<double> negative{1.2, -0.2, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(MixtureSpec::from_list(negative), ConfigurationError);
    const std::vector<double> short_list{0.5, 0.5};
    CHECK_THROWS_AS(MixtureSpec::from_list(short_list), ConfigurationError);
    const std::vector<double> single{0.0, 0.0, 1.0, 0.0, 0.0};
    CHECK_NOTHROW(MixtureSpec::from_list(single));
}

TEST_CASE("mixture sampling follows the group weights", "[mixture][statistics]") {
    const MixtureSpec spec;
    const std::array<std::size_t, kGroupCount> sizes{50, 7, 30, 12, 40};
    constexpr std::size_t kN = 100'000;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        std::array<double, kGroupCount> counts{};
        const auto draws = sample_mixture(sizes, spec, kN, seed);
        REQUIRE(draws.size() == kN);
        std::array<std::vector<std::size_t>, kGroupCount> per_item;
        for (std::size_t g = 0; g < kGroupCount; ++g) per_item[g].assign(sizes[g], 0);
        for (const auto& d : draws) {
            counts[d.group] += 1;
            REQUIRE(d.index < sizes[d.group]);
            ++per_item[d.group][d.index];
        }
        double chi2 = 0.0;
        for (std::size_t g = 0; g < kGroupCount; ++g) {
            const double expected = spec.weights[g] * kN;
            CHECK(std::abs(counts[g] / kN - spec.weights[g]) <= 0.01);
            chi2 += (counts[g] - expected) * (counts[g] - expected) / expected;
            // Epoch cycling: item counts within a group differ by at most one.
            const auto [lo, hi] = std::minmax_element(per_item[g].begin(), per_item[g].end());
            CHECK(*hi - *lo <= 1);
        }
        CHECK(chi2 < 18.4668);
    }
}

TEST_CASE("mixture sampling edge cases", "[mixture]") {
    const std::array<std::size_t, kGroupCount> sizes{5, 5, 5, 5, 5};
    CHECK(sample_mixture(sizes, MixtureSpec{}, 0, 1).empty());
    CHECK(sample_mixture(sizes, MixtureSpec{}, 300, 4) == sample_mixture(sizes, MixtureSpec{}, 300, 4));
    CHECK(sample_mixture(sizes, MixtureSpec{}, 300, 4) != sample_mixture(sizes, MixtureSpec{}, 300, 5));

    MixtureSpec only_m4;
    only_m4.weights = {0.0, 0.0, 1.0, 0.0, 0.0};
    const std::array<std::size_t, kGroupCount> sparse{0, 0, 3, 0, 0};
    for (const auto& d : sample_mixture(sparse, only_m4, 50, 2)) CHECK(d.group == 2);

    const std::array<std::size_t, kGroupCount> missing_m6{5, 5, 5, 5, 0};
    CHECK_THROWS_AS(sample_mixture(missing_m6, MixtureSpec{}, 10, 1), ConfigurationError);
}

TEST_CASE("build_mixture converts draws per variant", "[mixture]") {
    std::vector<PoolExample> all;
    for (Mode m : kAllModes) {
        for (int i = 0; i < 3; ++i) all.push_back(pool_example(m, recorded_icds(m), to_string(m) + "-" + std::to_string(i)));
    }
    const auto pools = group_pools(all);
    CHECK(pools[0].size() == 6);
    for (std::size_t g = 1; g < kGroupCount; ++g) CHECK(pools[g].size() == 3);

    const auto consistent = build_mixture(pools, MixtureSpec{}, Variant::Consistent, 200, 9);
    const auto balanced = build_mixture(pools, MixtureSpec{}, Variant::Balanced, 200, 9);
    REQUIRE(consistent.size() == 200);
    REQUIRE(balanced.size() == 200);
    for (std::size_t i = 0; i < consistent.size(); ++i) {
        CHECK(consistent[i].target_text == balanced[i].target_text);
        CHECK(consistent[i].mode == balanced[i].mode);
        CHECK(consistent[i].icd_count == recorded_icds(consistent[i].mode));
        CHECK(balanced[i].icd_count <= consistent[i].icd_count);
    }
    CHECK(build_mixture(pools, MixtureSpec{}, Variant::Balanced, 200, 9) == balanced);
}

TEST_CASE("training examples and pools round-trip through JSONL", "[mixture]") {
    const auto dir = oracle::fresh_dir("mixture_io");
    std::vector<PoolExample> all{pool_example(Mode::M5, 3, "a"), pool_example(Mode::M1, 0, "b")};
    write_jsonl(dir / "pool.jsonl", all);
    CHECK(load_pool(dir / "pool.jsonl") == all);
    // A pool file doubles as an ICD file.
    const auto pairs = load_pairs(dir / "pool.jsonl");
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].summary == all[0].target);
    CHECK(pairs[0].document == all[0].document);

    Rng rng(1);
    std::vector<TrainingExample> examples{to_consistent(all[0]), to_balanced(all[0], rng), to_consistent(all[1])};
    export_examples(dir / "train.jsonl", examples);
    CHECK(load_examples(dir / "train.jsonl") == examples);

    export_examples(dir / "empty.jsonl", std::vector<TrainingExample>{});
    CHECK(std::filesystem::exists(dir / "empty.jsonl"));
    CHECK(std::filesystem::file_size(dir / "empty.jsonl") == 0);
    CHECK(load_examples(dir / "empty.jsonl").empty());
}

TEST_CASE("build_pool joins kept records with their texts", "[mixture]") {
    std::vector<InputDoc> docs{{"d0", "Doc zero text.", std::nullopt}, {"d1", "Doc one text.", std::nullopt}};
    std::vector<LabeledPair> icds{{"p0", Source::CNNDM, "Icd doc.", "Icd sum."}};
    GenerationRecord kept;
    kept.id = "m3-d0";
    kept.mode = Mode::M3;
    kept.doc_id = "d0";
    kept.template_id = kFollowingId;
    kept.icd_ids = {"p0"};
    kept.filter_verdict = FilterVerdict{true, FilterStage::None, 0.7, 0.5, "Final."};
    GenerationRecord dropped = kept;
    dropped.id = "m3-d1";
    dropped.doc_id = "d1";
    dropped.filter_verdict = FilterVerdict{false, FilterStage::LengthBounds, std::nullopt, std::nullopt, std::nullopt};

    const std::vector<GenerationRecord> records{kept, dropped};
    const auto pool = build_pool(records, docs, icds);
    REQUIRE(pool.size() == 1);
    CHECK(pool[0].document == "Doc zero text.");
    CHECK(pool[0].target == "Final.");
    REQUIRE(pool[0].icds.size() == 1);
    CHECK(pool[0].icds[0].summary == "Icd sum.");

    const std::vector<LabeledPair> no_icds;
    CHECK_THROWS_AS(build_pool(records, docs, no_icds), InvalidData);
}
