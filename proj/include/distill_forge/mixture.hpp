#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/generation.hpp"
#include "distill_forge/jsonl.hpp"
#include "distill_forge/prompt_forge.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/records.hpp"

namespace distill {

// ---------------------------------------------------------------------------
// Pools: kept records joined with the text needed to re-render them
// ---------------------------------------------------------------------------

struct PoolExample {
    std::string id;
    Mode mode = Mode::M1;
    std::string doc_id;
    std::string document;
    std::string template_id;
    std::vector<LabeledPair> icds;  // generation-time order, original (untruncated) text
    std::string target;

    bool operator==(const PoolExample&) const = default;
};

inline void to_json(json& j, const PoolExample& e) {
    j = json{{"id", e.id},           {"mode", to_string(e.mode)}, {"doc_id", e.doc_id},
             {"document", e.document}, {"template_id", e.template_id}, {"icds", e.icds},
             {"summary", e.target}};
}

inline void from_json(const json& j, PoolExample& e) {
    e.id = j.at("id").get<std::string>();
    e.mode = parse_mode(j.at("mode").get<std::string>());
    e.doc_id = j.at("doc_id").get<std::string>();
    e.document = j.at("document").get<std::string>();
    e.template_id = j.at("template_id").get<std::string>();
    e.icds = j.at("icds").get<std::vector<LabeledPair>>();
    e.target = j.at("summary").get<std::string>();
}

/// Joins kept records with their source document and ICD texts. The output
/// also serves as an ICD pool file ({id, document, summary}).
inline std::vector<PoolExample> build_pool(std::span<const GenerationRecord> records,
                                           std::span<const InputDoc> docs, std::span<const LabeledPair> icd_pool) {
    std::unordered_map<std::string, const InputDoc*> doc_by_id;
    for (const auto& d : docs) doc_by_id.emplace(d.id, &d);
    std::unordered_map<std::string, const LabeledPair*> icd_by_id;
    for (const auto& p : icd_pool) icd_by_id.emplace(p.id, &p);

    std::vector<PoolExample> out;
    for (const auto& r : records) {
        if (!r.filter_verdict || !r.filter_verdict->kept) continue;
        auto doc = doc_by_id.find(r.doc_id);
        if (doc == doc_by_id.end()) throw InvalidData("record " + r.id + " references unknown doc " + r.doc_id);
        PoolExample e{r.id, r.mode, r.doc_id, doc->second->text, r.template_id, {}, *r.filter_verdict->final_summary};
        for (const auto& icd_id : r.icd_ids) {
            auto icd = icd_by_id.find(icd_id);
            if (icd == icd_by_id.end()) throw InvalidData("record " + r.id + " references unknown ICD " + icd_id);
            e.icds.push_back(*icd->second);
        }
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training examples
// ---------------------------------------------------------------------------

enum class Variant { Consistent, Balanced };

inline std::string_view to_string(Variant v) { return v == Variant::Consistent ? "consistent" : "balanced"; }

inline Variant parse_variant(std::string_view s) {
    if (s == "consistent") return Variant::Consistent;
    if (s == "balanced") return Variant::Balanced;
    throw InvalidParameter("unknown variant '" + std::string(s) + "' (expected balanced|consistent)");
}

struct TrainingExample {
    std::string input_text;
    std::string target_text;
    Mode mode = Mode::M1;
    std::size_t icd_count = 0;
    Variant variant = Variant::Consistent;

    bool operator==(const TrainingExample&) const = default;
};

inline void to_json(json& j, const TrainingExample& e) {
    j = json{{"input_text", e.input_text},
             {"target_text", e.target_text},
             {"mode", to_string(e.mode)},
             {"icd_count", e.icd_count},
             {"variant", to_string(e.variant)}};
}

inline void from_json(const json& j, TrainingExample& e) {
    e.input_text = j.at("input_text").get<std::string>();
    e.target_text = j.at("target_text").get<std::string>();
    e.mode = parse_mode(j.at("mode").get<std::string>());
    e.icd_count = j.at("icd_count").get<std::size_t>();
    e.variant = parse_variant(j.at("variant").get<std::string>());
}

/// ICD counts a balanced example may carry: zeroshot for M1/M4, 0-1 for
/// M2/M3, 0-4 for M5 and 1-4 for M6.
inline std::vector<std::size_t> legal_icd_counts(Mode m) {
    switch (m) {
        case Mode::M1:
        case Mode::M4: return {0};
        case Mode::M2:
        case Mode::M3: return {0, 1};
        case Mode::M5: return {0, 1, 2, 3, 4};
        case Mode::M6: return {1, 2, 3, 4};
    }
    return {0};
}

struct RenderOptions {
    std::size_t succinct_k = 256;
    std::size_t prompt_word_budget = 3072;
};

namespace detail {

inline TrainingExample render_with_icds(const PoolExample& e, std::size_t count, Variant variant, Rng* rng,
                                        const RenderOptions& options, const TemplateLibrary& lib) {
    TrainingExample out;
    out.target_text = e.target;
    out.mode = e.mode;
    out.variant = variant;
    if (count == 0) {
        const bool zeroshot_record = e.template_id != lib.following().id;
        const PromptTemplate& t = zeroshot_record || rng == nullptr ? lib.find(e.template_id) : lib.random(*rng);
        out.input_text = render_zeroshot(t, e.document).text;
        return out;
    }
    const bool succinct = mode_spec(e.mode).succinct();
    std::vector<DemonstrationPair> demos;
    for (std::size_t i = 0; i < count; ++i) {
        demos.push_back(make_demonstration(e.icds[i].id, e.icds[i].document, e.icds[i].summary,
                                           succinct ? options.succinct_k : 0));
    }
    const auto prompt = render_fewshot(demos, e.document, count, options.prompt_word_budget, lib.following());
    out.input_text = prompt.text;
    out.icd_count = prompt.icd_count;
    return out;
}

}  // namespace detail

/// Re-renders with every recorded ICD, i.e. the generation-time input.
inline TrainingExample to_consistent(const PoolExample& e, const RenderOptions& options = {},
                                     const TemplateLibrary& lib = TemplateLibrary::builtin()) {
    return detail::render_with_icds(e, e.icds.size(), Variant::Consistent, nullptr, options, lib);
}

/// Draws the ICD count uniformly from the mode's legal set (capped at the
/// recorded ICD count) and re-renders with that prefix of the ICD list.
inline TrainingExample to_balanced(const PoolExample& e, Rng& rng, const RenderOptions& options = {},
                                   const TemplateLibrary& lib = TemplateLibrary::builtin()) {
    if (e.mode == Mode::M6 && e.icds.empty()) {
        throw InvalidData("M6 example " + e.id + " has no in-context demonstrations");
    }
    std::vector<std::size_t> legal;
    for (auto c : legal_icd_counts(e.mode)) {
        if (c <= e.icds.size()) legal.push_back(c);
    }
    const std::size_t count = legal[static_cast<std::size_t>(uniform_index(rng, legal.size()))];
    return detail::render_with_icds(e, count, Variant::Balanced, &rng, options, lib);
}

// ---------------------------------------------------------------------------
// Mixture sampling
// ---------------------------------------------------------------------------

enum class TaskGroup { M1M2 = 0, M3, M4, M5, M6 };
inline constexpr std::size_t kGroupCount = 5;

inline TaskGroup group_of(Mode m) {
    switch (m) {
        case Mode::M1:
        case Mode::M2: return TaskGroup::M1M2;
        case Mode::M3: return TaskGroup::M3;
        case Mode::M4: return TaskGroup::M4;
        case Mode::M5: return TaskGroup::M5;
        case Mode::M6: return TaskGroup::M6;
    }
    return TaskGroup::M1M2;
}

inline std::string_view group_name(std::size_t g) {
    static constexpr std::array<std::string_view, kGroupCount> kNames{"M1+M2", "M3", "M4", "M5", "M6"};
    return kNames.at(g);
}

/// Sampling weights per task group, in the order M1+M2, M3, M4, M5, M6.
struct MixtureSpec {
    std::array<double, kGroupCount> weights{0.45, 0.1, 0.15, 0.15, 0.15};

    void validate() const {
        double sum = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigurationError("mixture weights must be non-negative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigurationError("mixture weights must sum to 1 (got " + std::to_string(sum) + ")");
        }
    }

    static MixtureSpec from_list(std::span<const double> values) {
        if (values.size() != kGroupCount) {
            throw ConfigurationError("expected " + std::to_string(kGroupCount) + " mixture weights");
        }
        MixtureSpec spec;
        std::copy(values.begin(), values.end(), spec.weights.begin());
        spec.validate();
        return spec;
    }
};

/// A draw identifies one pool item: (group, index within that group's pool).
struct MixtureDraw {
    std::size_t group = 0;
    std::size_t index = 0;

    bool operator==(const MixtureDraw&) const = default;
};

/// Each draw picks a group with probability equal to its weight, then the
/// next item of that group's current epoch. Epochs are reshuffled
/// permutations of the pool, so small pools cycle instead of starving.
inline std::vector<MixtureDraw> sample_mixture(std::span<const std::size_t> pool_sizes, const MixtureSpec& spec,
                                               std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (pool_sizes.size() != kGroupCount) throw ConfigurationError("sample_mixture: expected five pools");
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        if (spec.weights[g] > 0.0 && pool_sizes[g] == 0) {
            throw ConfigurationError("mixture group " + std::string(group_name(g)) + " has weight " +
                                     std::to_string(spec.weights[g]) + " but an empty pool");
        }
    }

    Rng rng(derive_seed(seed, 0x6d6978));
    std::array<std::vector<std::size_t>, kGroupCount> epoch;
    std::array<std::size_t, kGroupCount> cursor{};
    std::size_t last_positive = 0;
    for (std::size_t g = 0; g < kGroupCount; ++g) {
        if (spec.weights[g] > 0.0) last_positive = g;
    }

    std::vector<MixtureDraw> draws;
    draws.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = uniform_unit(rng);
        std::size_t g = last_positive;
        double cumulative = 0.0;
        for (std::size_t k = 0; k < kGroupCount; ++k) {
            cumulative += spec.weights[k];
            if (spec.weights[k] > 0.0 && u < cumulative) {
                g = k;
                break;
            }
        }
        if (cursor[g] == epoch[g].size()) {
            epoch[g].resize(pool_sizes[g]);
            std::iota(epoch[g].begin(), epoch[g].end(), std::size_t{0});
            shuffle_in_place(std::span<std::size_t>(epoch[g]), rng);
            cursor[g] = 0;
        }
        draws.push_back({g, epoch[g][cursor[g]++]});
    }
    return draws;
}

/// Samples `n` items from per-group pools, returning copies in draw order.
template <class T>
std::vector<T> sample_mixture(const std::array<std::vector<T>, kGroupCount>& pools, const MixtureSpec& spec,
                              std::size_t n, std::uint64_t seed) {
    std::array<std::size_t, kGroupCount> sizes{};
    for (std::size_t g = 0; g < kGroupCount; ++g) sizes[g] = pools[g].size();
    std::vector<T> out;
    out.reserve(n);
    for (const auto& d : sample_mixture(sizes, spec, n, seed)) out.push_back(pools[d.group][d.index]);
    return out;
}

/// Samples the mixture and converts each draw to a training example. Balanced
/// conversions draw fresh ICD counts per draw from a stream seeded by `seed`.
inline std::vector<TrainingExample> build_mixture(const std::array<std::vector<PoolExample>, kGroupCount>& pools,
                                                  const MixtureSpec& spec, Variant variant, std::size_t n,
                                                  std::uint64_t seed, const RenderOptions& options = {},
                                                  const TemplateLibrary& lib = TemplateLibrary::builtin()) {
    std::array<std::size_t, kGroupCount> sizes{};
    for (std::size_t g = 0; g < kGroupCount; ++g) sizes[g] = pools[g].size();
    const auto draws = sample_mixture(sizes, spec, n, seed);
    Rng rng(derive_seed(seed, 0x62616c));
    std::vector<TrainingExample> out;
    out.reserve(draws.size());
    for (const auto& d : draws) {
        const PoolExample& e = pools[d.group][d.index];
        out.push_back(variant == Variant::Balanced ? to_balanced(e, rng, options, lib) : to_consistent(e, options, lib));
    }
    return out;
}

inline std::array<std::vector<PoolExample>, kGroupCount> group_pools(std::span<const PoolExample> examples) {
    std::array<std::vector<PoolExample>, kGroupCount> pools;
    for (const auto& e : examples) pools[static_cast<std::size_t>(group_of(e.mode))].push_back(e);
    return pools;
}

inline void export_examples(const std::filesystem::path& path, std::span<const TrainingExample> examples) {
    write_jsonl(path, examples);
}

inline std::vector<TrainingExample> load_examples(const std::filesystem::path& path) {
    std::vector<TrainingExample> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j.get<TrainingExample>()); });
    return out;
}

inline std::vector<PoolExample> load_pool(const std::filesystem::path& path) {
    std::vector<PoolExample> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j.get<PoolExample>()); });
    return out;
}

}  // namespace distill
