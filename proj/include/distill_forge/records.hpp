#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <ctime>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distill_forge/backend.hpp"
#include "distill_forge/corpus_ingest.hpp"
#include "distill_forge/errors.hpp"
#include "distill_forge/jsonl.hpp"

namespace distill {

// ---------------------------------------------------------------------------
// Generation modes
// ---------------------------------------------------------------------------

enum class Mode { M1 = 1, M2, M3, M4, M5, M6 };

inline constexpr std::array<Mode, 6> kAllModes{Mode::M1, Mode::M2, Mode::M3, Mode::M4, Mode::M5, Mode::M6};

inline std::size_t mode_number(Mode m) { return static_cast<std::size_t>(m); }

inline std::string to_string(Mode m) { return "M" + std::to_string(mode_number(m)); }

inline Mode parse_mode(std::string_view s) {
    if (s.size() == 2 && (s[0] == 'm' || s[0] == 'M') && s[1] >= '1' && s[1] <= '6') {
        return static_cast<Mode>(s[1] - '0');
    }
    throw InvalidParameter("unknown generation mode '" + std::string(s) + "' (expected m1..m6)");
}

enum class IcdDocSource { None, General, Supervised };
enum class IcdSummarySource { None, GPTZeroshot, Supervised };
enum class IcdCountRule { Zero, One, UpToFour };
enum class InputSource { General, Supervised };
enum class TargetSource { GPTZeroshot, GPTFewshot, Supervised };

struct GenerationMode {
    Mode index;
    IcdDocSource icd_doc_source;
    IcdSummarySource icd_summary_source;
    IcdCountRule icd_count_rule;
    InputSource input_source;
    TargetSource target_source;

    bool fewshot() const { return icd_count_rule != IcdCountRule::Zero; }
    bool succinct() const { return icd_count_rule == IcdCountRule::UpToFour; }
    bool calls_backend() const { return target_source != TargetSource::Supervised; }
};

/// The six rows of the generation table. M2's ICD summaries are kept M1 outputs.
inline constexpr GenerationMode mode_spec(Mode m) {
    switch (m) {
        case Mode::M1:
            return {m, IcdDocSource::None, IcdSummarySource::None, IcdCountRule::Zero, InputSource::General,
                    TargetSource::GPTZeroshot};
        case Mode::M2:
            return {m, IcdDocSource::General, IcdSummarySource::GPTZeroshot, IcdCountRule::One, InputSource::General,
                    TargetSource::GPTFewshot};
        case Mode::M3:
            return {m, IcdDocSource::Supervised, IcdSummarySource::Supervised, IcdCountRule::One,
                    InputSource::General, TargetSource::GPTFewshot};
        case Mode::M4:
            return {m, IcdDocSource::None, IcdSummarySource::None, IcdCountRule::Zero, InputSource::Supervised,
                    TargetSource::GPTZeroshot};
        case Mode::M5:
            return {m, IcdDocSource::Supervised, IcdSummarySource::Supervised, IcdCountRule::UpToFour,
                    InputSource::Supervised, TargetSource::GPTFewshot};
        case Mode::M6:
            return {m, IcdDocSource::Supervised, IcdSummarySource::Supervised, IcdCountRule::UpToFour,
                    InputSource::Supervised, TargetSource::Supervised};
    }
    return {m, IcdDocSource::None, IcdSummarySource::None, IcdCountRule::Zero, InputSource::General,
            TargetSource::GPTZeroshot};
}

// ---------------------------------------------------------------------------
// Labeled pairs: supervised data, ICD pools and evaluation sets
// ---------------------------------------------------------------------------

/// {id, source?, document, summary|reference}
struct LabeledPair {
    std::string id;
    Source source = Source::Custom;
    std::string document;
    std::string summary;

    bool operator==(const LabeledPair&) const = default;
};

inline void to_json(json& j, const LabeledPair& p) {
    j = json{{"id", p.id}, {"source", to_string(p.source)}, {"document", p.document}, {"summary", p.summary}};
}

inline void from_json(const json& j, LabeledPair& p) {
    p.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    p.source = j.contains("source") ? parse_source(j.at("source").get<std::string>()) : Source::Custom;
    p.document = normalize_newlines(j.contains("document") ? j.at("document").get<std::string>()
                                                           : j.at("text").get<std::string>());
    p.summary = normalize_newlines(j.contains("summary") ? j.at("summary").get<std::string>()
                                                         : j.value("reference", std::string{}));
}

inline std::vector<LabeledPair> load_pairs(const std::filesystem::path& path) {
    std::vector<LabeledPair> pairs;
    for_each_jsonl(path, [&](const json& j, std::size_t) { pairs.push_back(j.get<LabeledPair>()); });
    return pairs;
}

// ---------------------------------------------------------------------------
// Filter verdicts
// ---------------------------------------------------------------------------

enum class FilterStage { FinishReason, NewlineSplit, LengthBounds, Rouge1Precision, Rouge2Precision, None };

inline std::string_view to_string(FilterStage s) {
    switch (s) {
        case FilterStage::FinishReason: return "FinishReason";
        case FilterStage::NewlineSplit: return "NewlineSplit";
        case FilterStage::LengthBounds: return "LengthBounds";
        case FilterStage::Rouge1Precision: return "Rouge1Precision";
        case FilterStage::Rouge2Precision: return "Rouge2Precision";
        case FilterStage::None: return "None";
    }
    return "None";
}

inline FilterStage parse_filter_stage(std::string_view s) {
    for (auto stage : {FilterStage::FinishReason, FilterStage::NewlineSplit, FilterStage::LengthBounds,
                       FilterStage::Rouge1Precision, FilterStage::Rouge2Precision, FilterStage::None}) {
        if (to_string(stage) == s) return stage;
    }
    throw InvalidData("unknown filter stage '" + std::string(s) + "'");
}

struct FilterVerdict {
    bool kept = false;
    FilterStage stage = FilterStage::None;
    std::optional<double> r1_precision;
    std::optional<double> r2_precision;
    std::optional<std::string> final_summary;

    bool operator==(const FilterVerdict&) const = default;
};

inline void to_json(json& j, const FilterVerdict& v) {
    j = json::object();
    j["status"] = v.kept ? "kept" : "dropped";
    if (!v.kept) j["reason"] = to_string(v.stage);
    j["stage"] = to_string(v.stage);
    if (v.r1_precision) j["r1_precision"] = *v.r1_precision;
    if (v.r2_precision) j["r2_precision"] = *v.r2_precision;
    if (v.final_summary) j["final_summary"] = *v.final_summary;
}

inline void from_json(const json& j, FilterVerdict& v) {
    v.kept = j.at("status").get<std::string>() == "kept";
    v.stage = parse_filter_stage(j.at("stage").get<std::string>());
    v.r1_precision = j.contains("r1_precision") ? std::optional(j.at("r1_precision").get<double>()) : std::nullopt;
    v.r2_precision = j.contains("r2_precision") ? std::optional(j.at("r2_precision").get<double>()) : std::nullopt;
    v.final_summary =
        j.contains("final_summary") ? std::optional(j.at("final_summary").get<std::string>()) : std::nullopt;
}

// ---------------------------------------------------------------------------
// Generation records
// ---------------------------------------------------------------------------

struct GenerationRecord {
    std::string id;
    Mode mode = Mode::M1;
    std::string template_id;
    std::string prompt_text;
    std::string doc_id;
    std::vector<std::string> icd_ids;
    std::string completion_text;  // raw backend output
    FinishReason finish_reason = FinishReason::Error;
    std::string backend_name;
    std::string timestamp;
    std::optional<FilterVerdict> filter_verdict;  // nullopt: pending

    bool operator==(const GenerationRecord&) const = default;
};

inline void to_json(json& j, const GenerationRecord& r) {
    j = json{{"id", r.id},
             {"mode", to_string(r.mode)},
             {"template_id", r.template_id},
             {"prompt_text", r.prompt_text},
             {"doc_id", r.doc_id},
             {"icd_ids", r.icd_ids},
             {"completion_text", r.completion_text},
             {"finish_reason", to_string(r.finish_reason)},
             {"backend_name", r.backend_name},
             {"timestamp", r.timestamp}};
    j["filter_verdict"] = r.filter_verdict ? json(*r.filter_verdict) : json{{"status", "pending"}};
}

inline void from_json(const json& j, GenerationRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.template_id = j.at("template_id").get<std::string>();
    r.prompt_text = j.at("prompt_text").get<std::string>();
    r.doc_id = j.at("doc_id").get<std::string>();
    r.icd_ids = j.at("icd_ids").get<std::vector<std::string>>();
    r.completion_text = j.at("completion_text").get<std::string>();
    r.finish_reason = parse_finish_reason(j.at("finish_reason").get<std::string>());
    r.backend_name = j.at("backend_name").get<std::string>();
    r.timestamp = j.value("timestamp", std::string{});
    const auto& v = j.at("filter_verdict");
    if (v.at("status").get<std::string>() == "pending") {
        r.filter_verdict.reset();
    } else {
        r.filter_verdict = v.get<FilterVerdict>();
    }
}

inline std::vector<GenerationRecord> load_records(const std::filesystem::path& path) {
    std::vector<GenerationRecord> records;
    for_each_jsonl(path, [&](const json& j, std::size_t) { records.push_back(j.get<GenerationRecord>()); });
    return records;
}

/// ISO-8601 UTC with millisecond precision.
inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(millis));
    return out;
}

}  // namespace distill
