#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/records.hpp"
#include "distill_forge/rouge.hpp"
#include "distill_forge/text.hpp"

namespace distill {

/// Keep rule: 10 <= words <= 512 (and <= document words),
/// ROUGE-1 precision > 0.6, 0.25 <= ROUGE-2 precision <= 0.8.
struct FilterThresholds {
    double r1_min = 0.6;  // strict
    double r2_min = 0.25;
    double r2_max = 0.8;
    std::size_t min_words = 10;
    std::size_t max_words = 512;
};

inline void to_json(json& j, const FilterThresholds& t) {
    j = json{{"r1_min", t.r1_min}, {"r2_min", t.r2_min}, {"r2_max", t.r2_max},
             {"min_words", t.min_words}, {"max_words", t.max_words}};
}

inline void from_json(const json& j, FilterThresholds& t) {
    const FilterThresholds d;
    t.r1_min = j.value("r1_min", d.r1_min);
    t.r2_min = j.value("r2_min", d.r2_min);
    t.r2_max = j.value("r2_max", d.r2_max);
    t.min_words = j.value("min_words", d.min_words);
    t.max_words = j.value("max_words", d.max_words);
}

inline bool gate_finish_reason(FinishReason reason) { return reason == FinishReason::Stop; }

/// Text before the first run of two or more '\n' (carriage returns inside
/// the run are ignored), with trailing whitespace trimmed.
inline std::string split_first_segment(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\n') continue;
        std::size_t j = i + 1;
        while (j < text.size() && text[j] == '\r') ++j;
        if (j < text.size() && text[j] == '\n') return std::string(trim_right(text.substr(0, i)));
    }
    return std::string(text);
}

inline bool gate_length(std::size_t summary_words, std::size_t doc_words, const FilterThresholds& t = {}) {
    return summary_words >= t.min_words && summary_words <= t.max_words && summary_words <= doc_words;
}

struct RougeGate {
    bool pass = false;
    FilterStage failed_stage = FilterStage::None;
    std::optional<double> r1_precision;
    std::optional<double> r2_precision;
};

/// Summary is the candidate and the document the reference; only precision
/// is consulted. An undefined score fails at the stage that produced it.
inline RougeGate gate_rouge(std::string_view summary, std::string_view doc, const FilterThresholds& t = {}) {
    const auto cand = rouge::rouge_tokenize(summary);
    const auto ref = rouge::rouge_tokenize(doc);
    RougeGate gate;
    try {
        gate.r1_precision = rouge::rouge_n(std::span<const std::string>(cand), ref, 1).precision;
    } catch (const UndefinedScore&) {
        gate.failed_stage = FilterStage::Rouge1Precision;
        return gate;
    }
    if (!(*gate.r1_precision > t.r1_min)) {
        gate.failed_stage = FilterStage::Rouge1Precision;
        return gate;
    }
    try {
        gate.r2_precision = rouge::rouge_n(std::span<const std::string>(cand), ref, 2).precision;
    } catch (const UndefinedScore&) {
        gate.failed_stage = FilterStage::Rouge2Precision;
        return gate;
    }
    if (*gate.r2_precision < t.r2_min || *gate.r2_precision > t.r2_max) {
        gate.failed_stage = FilterStage::Rouge2Precision;
        return gate;
    }
    gate.pass = true;
    return gate;
}

/// Stages in order: finish reason, newline split, length, ROUGE. The first
/// failing stage short-circuits the rest.
inline FilterVerdict run_filter(const GenerationRecord& record, std::string_view doc_text,
                                const FilterThresholds& t = {}) {
    FilterVerdict v;
    if (!gate_finish_reason(record.finish_reason)) {
        v.stage = FilterStage::FinishReason;
        return v;
    }
    std::string summary = split_first_segment(normalize_newlines(record.completion_text));
    if (!gate_length(count_words(summary), count_words(doc_text), t)) {
        v.stage = FilterStage::LengthBounds;
        return v;
    }
    const RougeGate gate = gate_rouge(summary, doc_text, t);
    v.r1_precision = gate.r1_precision;
    v.r2_precision = gate.r2_precision;
    if (!gate.pass) {
        v.stage = gate.failed_stage;
        return v;
    }
    v.kept = true;
    v.stage = FilterStage::None;
    v.final_summary = std::move(summary);
    return v;
}

struct ModeFilterStats {
    std::size_t generated = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::map<std::string, std::size_t> dropped_by_stage;

    double kept_rate() const { return generated == 0 ? 0.0 : static_cast<double>(kept) / generated; }

    ModeFilterStats& operator+=(const ModeFilterStats& o) {
        generated += o.generated;
        kept += o.kept;
        dropped += o.dropped;
        for (const auto& [k, n] : o.dropped_by_stage) dropped_by_stage[k] += n;
        return *this;
    }
};

struct FilterReport {
    std::map<std::string, ModeFilterStats> per_mode;  // "M1".."M6"
    FilterThresholds thresholds;
};

inline void to_json(json& j, const FilterReport& r) {
    j = json::object();
    j["thresholds"] = r.thresholds;
    json modes = json::object();
    for (const auto& [mode, s] : r.per_mode) {
        modes[mode] = json{{"generated", s.generated},
                           {"kept", s.kept},
                           {"dropped", s.dropped},
                           {"kept_rate", s.kept_rate()},
                           {"dropped_by_stage", s.dropped_by_stage}};
    }
    j["modes"] = modes;
    // Drop rates observed with the original proprietary backend; informational.
    j["reference_drop_rates"] = json{{"M1", "17%"}, {"M2", "<5%"}};
}

struct FilterResult {
    std::vector<GenerationRecord> records;
    FilterReport report;
};

/// Applies run_filter to every record. `doc_texts` maps doc_id to text.
inline FilterResult filter_records(std::vector<GenerationRecord> records,
                                   const std::unordered_map<std::string, std::string>& doc_texts,
                                   const FilterThresholds& t = {}, std::size_t workers = 1) {
    for (const auto& r : records) {
        if (!doc_texts.contains(r.doc_id)) throw InvalidData("record " + r.id + " references unknown doc " + r.doc_id);
    }
    parallel_for(records.size(), workers, [&](std::size_t i) {
        records[i].filter_verdict = run_filter(records[i], doc_texts.at(records[i].doc_id), t);
    });
    FilterResult result;
    result.report.thresholds = t;
    for (const auto& r : records) {
        auto& s = result.report.per_mode[to_string(r.mode)];
        ++s.generated;
        if (r.filter_verdict->kept) {
            ++s.kept;
        } else {
            ++s.dropped;
            ++s.dropped_by_stage[std::string(to_string(r.filter_verdict->stage))];
        }
    }
    result.records = std::move(records);
    return result;
}

}  // namespace distill
