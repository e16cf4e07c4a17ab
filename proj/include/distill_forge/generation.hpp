#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "distill_forge/backend.hpp"
#include "distill_forge/errors.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/prompt_forge.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/records.hpp"

namespace distill {

/// A document to summarize. Supervised inputs also carry their reference.
struct InputDoc {
    std::string id;
    std::string text;
    std::optional<std::string> reference;
};

inline InputDoc to_input(const Document& d) { return {d.id, d.text, std::nullopt}; }
inline InputDoc to_input(const LabeledPair& p) { return {p.id, p.document, p.summary}; }

template <class Range>
std::vector<InputDoc> to_inputs(const Range& items) {
    std::vector<InputDoc> out;
    for (const auto& item : items) out.push_back(to_input(item));
    return out;
}

struct GenerationConfig {
    std::size_t succinct_k = 256;
    std::size_t max_icds = 4;
    std::size_t prompt_word_budget = 3072;
    RetryPolicy policy;
    std::size_t workers = 1;
};

/// ICDs for M2: every kept record paired with its source document text.
inline std::vector<LabeledPair> icd_pool_from_records(std::span<const GenerationRecord> records,
                                                      std::span<const InputDoc> docs) {
    std::unordered_map<std::string, const InputDoc*> by_id;
    for (const auto& d : docs) by_id.emplace(d.id, &d);
    std::vector<LabeledPair> pool;
    for (const auto& r : records) {
        if (!r.filter_verdict || !r.filter_verdict->kept) continue;
        auto it = by_id.find(r.doc_id);
        if (it == by_id.end()) throw InvalidData("record " + r.id + " references unknown doc " + r.doc_id);
        pool.push_back({r.id, Source::General, it->second->text, *r.filter_verdict->final_summary});
    }
    return pool;
}

namespace detail {

/// Up to `count` distinct pool indices, uniform without replacement, never
/// selecting the pair that shares the input document's id.
inline std::vector<std::size_t> sample_icds(std::span<const LabeledPair> pool, std::string_view exclude_id,
                                            std::size_t count, Rng& rng) {
    std::vector<std::size_t> eligible;
    eligible.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].id != exclude_id) eligible.push_back(i);
    }
    count = std::min(count, eligible.size());
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(count);
    return eligible;
}

}  // namespace detail

/// Produces exactly one record per input document, in input order. Backend
/// calls run on up to `config.workers` threads; failures become records with
/// finish_reason Error rather than aborting the run.
inline std::vector<GenerationRecord> run_mode(Mode mode, std::span<const InputDoc> docs,
                                              std::span<const LabeledPair> icd_pool, Backend& backend,
                                              std::uint64_t seed, const GenerationConfig& config = {},
                                              RateLimiter* limiter = nullptr,
                                              const TemplateLibrary& templates = TemplateLibrary::builtin()) {
    const GenerationMode spec = mode_spec(mode);
    if (spec.fewshot() && icd_pool.empty()) {
        throw ConfigurationError(to_string(mode) + " needs a nonempty ICD pool" +
                                 (mode == Mode::M2 ? " (kept M1 records)" : ""));
    }
    if (!spec.calls_backend()) {
        for (const auto& d : docs) {
            if (!d.reference) throw ConfigurationError(to_string(mode) + " input " + d.id + " has no reference summary");
        }
    }

    std::vector<GenerationRecord> records(docs.size());
    parallel_for(docs.size(), config.workers, [&](std::size_t i) {
        const InputDoc& doc = docs[i];
        Rng rng(derive_seed(seed, mode_number(mode), i));
        GenerationRecord& rec = records[i];
        rec.id = "m" + std::to_string(mode_number(mode)) + "-" + doc.id;
        rec.mode = mode;
        rec.doc_id = doc.id;
        rec.backend_name = spec.calls_backend() ? backend.name() : "supervised";

        try {
            if (!spec.fewshot()) {
                const auto prompt = render_zeroshot(templates.random(rng), doc.text);
                rec.template_id = prompt.template_id;
                rec.prompt_text = prompt.text;
            } else {
                const std::size_t wanted = spec.icd_count_rule == IcdCountRule::One ? 1 : config.max_icds;
                const auto picks = detail::sample_icds(icd_pool, doc.id, wanted, rng);
                if (picks.empty()) throw ConfigurationError("no eligible ICD for " + doc.id);
                std::vector<DemonstrationPair> demos;
                for (auto p : picks) {
                    demos.push_back(make_demonstration(icd_pool[p].id, icd_pool[p].document, icd_pool[p].summary,
                                                       spec.succinct() ? config.succinct_k : 0));
                }
                const auto prompt =
                    render_fewshot(demos, doc.text, wanted, config.prompt_word_budget, templates.following());
                rec.template_id = prompt.template_id;
                rec.prompt_text = prompt.text;
                for (std::size_t k = 0; k < prompt.icd_count; ++k) rec.icd_ids.push_back(demos[k].id);
            }
        } catch (const BudgetExceeded&) {
            rec.template_id = spec.fewshot() ? templates.following().id : std::string{};
            rec.finish_reason = FinishReason::Error;
            rec.timestamp = utc_timestamp();
            return;
        }

        if (spec.calls_backend()) {
            auto outcome = complete_with_policy(backend, rec.prompt_text, config.policy, limiter);
            rec.completion_text = std::move(outcome.completion.text);
            rec.finish_reason = outcome.completion.finish_reason;
        } else {
            rec.completion_text = *doc.reference;
            rec.finish_reason = FinishReason::Stop;
        }
        rec.timestamp = utc_timestamp();
    });
    return records;
}

}  // namespace distill
