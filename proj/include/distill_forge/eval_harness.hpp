#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/jsonl.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/records.hpp"
#include "distill_forge/rouge.hpp"

namespace distill {

enum class EvalSetting { Zeroshot, FewshotInstruct, FewshotPrefix, Supervised };

inline std::string_view to_string(EvalSetting s) {
    switch (s) {
        case EvalSetting::Zeroshot: return "Zeroshot";
        case EvalSetting::FewshotInstruct: return "FewshotInstruct";
        case EvalSetting::FewshotPrefix: return "FewshotPrefix";
        case EvalSetting::Supervised: return "Supervised";
    }
    return "Zeroshot";
}

inline EvalSetting parse_eval_setting(std::string_view s) {
    for (auto v : {EvalSetting::Zeroshot, EvalSetting::FewshotInstruct, EvalSetting::FewshotPrefix,
                   EvalSetting::Supervised}) {
        if (to_string(v) == s) return v;
    }
    throw InvalidParameter("unknown eval setting '" + std::string(s) + "'");
}

struct EvalReport {
    std::string dataset;
    EvalSetting setting = EvalSetting::Zeroshot;
    std::size_t n_docs = 0;
    double rouge2_f1_mean = 0.0;
    double rouge2_precision_mean = 0.0;
    double rouge2_recall_mean = 0.0;
};

struct ScoreResult {
    EvalReport report;
    std::vector<std::string> missing_ids;  // references with no candidate, scored 0
};

inline void to_json(json& j, const ScoreResult& r) {
    j = json{{"dataset", r.report.dataset},
             {"setting", to_string(r.report.setting)},
             {"metric", "ROUGE-2, mean of per-document scores, lowercase alphanumeric tokens, no stemming"},
             {"n_docs", r.report.n_docs},
             {"rouge2_f1_mean", r.report.rouge2_f1_mean},
             {"rouge2_precision_mean", r.report.rouge2_precision_mean},
             {"rouge2_recall_mean", r.report.rouge2_recall_mean},
             {"missing_ids", r.missing_ids}};
}

struct SampleResult {
    std::vector<LabeledPair> documents;
    bool warning = false;  // fewer than n acceptable documents
};

/// Uniform sample of `n` documents without replacement. Rejected documents
/// are skipped and replaced by the next one in the seeded permutation.
inline SampleResult sample_test_set(std::span<const LabeledPair> dataset, std::size_t n, std::uint64_t seed,
                                    const std::function<bool(const LabeledPair&)>& accept = {}) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x73616d));
    shuffle_in_place(std::span<std::size_t>(order), rng);

    SampleResult result;
    for (std::size_t idx : order) {
        if (result.documents.size() == n) break;
        if (accept && !accept(dataset[idx])) continue;
        result.documents.push_back(dataset[idx]);
    }
    result.warning = result.documents.size() < n;
    return result;
}

/// Mean ROUGE-2 over every reference id; a missing candidate scores 0.
/// Aggregation runs in id order so the result is independent of input order.
inline ScoreResult score(const std::map<std::string, std::string>& candidates,
                         const std::map<std::string, std::string>& references, std::string dataset = {},
                         EvalSetting setting = EvalSetting::Zeroshot) {
    if (candidates.empty()) throw EmptyInput("score: no candidate summaries");
    for (const auto& [id, _] : candidates) {
        if (!references.contains(id)) throw InvalidData("score: candidate '" + id + "' has no reference");
    }
    ScoreResult result;
    result.report.dataset = std::move(dataset);
    result.report.setting = setting;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    for (const auto& [id, reference] : references) {
        auto it = candidates.find(id);
        if (it == candidates.end()) {
            result.missing_ids.push_back(id);
            continue;
        }
        try {
            const auto s = rouge::rouge_n(it->second, reference, 2);
            f1 += s.f1;
            precision += s.precision;
            recall += s.recall;
        } catch (const UndefinedScore&) {
        }
    }
    const auto n = static_cast<double>(references.size());
    result.report.n_docs = references.size();
    result.report.rouge2_f1_mean = f1 / n;
    result.report.rouge2_precision_mean = precision / n;
    result.report.rouge2_recall_mean = recall / n;
    return result;
}

}  // namespace distill
