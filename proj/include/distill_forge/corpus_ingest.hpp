#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/hashing.hpp"
#include "distill_forge/jsonl.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/text.hpp"

namespace distill {

enum class Source { General, ArXiv, CNNDM, WikiHow, Custom };

inline std::string_view to_string(Source s) {
    switch (s) {
        case Source::General: return "General";
        case Source::ArXiv: return "ArXiv";
        case Source::CNNDM: return "CNNDM";
        case Source::WikiHow: return "WikiHow";
        case Source::Custom: return "Custom";
    }
    return "Custom";
}

inline Source parse_source(std::string_view name) {
    std::string lower;
    for (char c : name) {
        if (is_ascii_alnum(c)) lower += ascii_lower(c);
    }
    if (lower == "general" || lower == "pile") return Source::General;
    if (lower == "arxiv") return Source::ArXiv;
    if (lower == "cnndm" || lower == "cnndailymail") return Source::CNNDM;
    if (lower == "wikihow") return Source::WikiHow;
    return Source::Custom;
}

struct Document {
    std::string id;
    Source source = Source::Custom;
    std::string text;
    std::size_t word_count = 0;
    bool truncated = false;
    std::size_t original_word_count = 0;

    bool operator==(const Document&) const = default;
};

inline void to_json(json& j, const Document& d) {
    j = json{{"id", d.id},
             {"source", to_string(d.source)},
             {"text", d.text},
             {"word_count", d.word_count},
             {"truncated", d.truncated},
             {"original_word_count", d.original_word_count}};
}

/// Accepts raw input records ({id, source, text}), previously emitted
/// Documents, and supervised pairs (whose body is under "document"). A missing id is derived from the text hash.
inline void from_json(const json& j, Document& d) {
    const auto& body = j.contains("text") ? j.at("text") : j.at("document");
    d.text = normalize_newlines(body.get<std::string>());
    d.id = j.contains("id") && !j.at("id").is_null()
               ? (j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump())
               : "doc-" + sha256_hex(d.text).substr(0, 16);
    d.source = j.contains("source") ? parse_source(j.at("source").get<std::string>()) : Source::Custom;
    d.word_count = count_words(d.text);
    d.original_word_count = std::max(d.word_count, j.value("original_word_count", std::size_t{0}));
    d.truncated = j.value("truncated", false) || d.original_word_count > d.word_count;
}

inline Document make_document(std::string id, Source source, std::string text) {
    Document d;
    d.id = std::move(id);
    d.source = source;
    d.text = std::move(text);
    d.word_count = count_words(d.text);
    d.original_word_count = d.word_count;
    return d;
}

struct CleaningReport {
    std::size_t input_count = 0;
    std::size_t dropped_non_english = 0;
    std::size_t dropped_duplicate = 0;
    std::size_t truncated_count = 0;
    std::size_t emitted_count = 0;

    bool operator==(const CleaningReport&) const = default;
};

inline void to_json(json& j, const CleaningReport& r) {
    j = json{{"input_count", r.input_count},
             {"dropped_non_english", r.dropped_non_english},
             {"dropped_duplicate", r.dropped_duplicate},
             {"truncated_count", r.truncated_count},
             {"emitted_count", r.emitted_count}};
}

struct IngestOptions {
    std::size_t max_words = 4096;
    double non_english_threshold = 0.7;
    std::size_t workers = 1;
};

/// ASCII letters, digits and the punctuation set . , ; : ' " ! ? ( ) -
constexpr bool is_english_symbol(char32_t cp) noexcept {
    if (cp < 0x80 && is_ascii_alnum(static_cast<char>(cp))) return true;
    switch (cp) {
        case U'.': case U',': case U';': case U':': case U'\'': case U'"':
        case U'!': case U'?': case U'(': case U')': case U'-':
            return true;
        default:
            return false;
    }
}

/// Fraction of non-whitespace code points outside the English symbol set.
inline double non_english_fraction(std::string_view text) {
    std::size_t total = 0;
    std::size_t foreign = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = next_code_point(text, pos);
        if (is_unicode_space(cp)) continue;
        ++total;
        if (!is_english_symbol(cp)) ++foreign;
    }
    if (total == 0) throw InvalidInput("is_english_enough: text has no non-whitespace characters");
    return static_cast<double>(foreign) / static_cast<double>(total);
}

inline bool is_english_enough(std::string_view text, double threshold = 0.7) {
    if (text.empty()) throw InvalidInput("is_english_enough: empty text");
    return non_english_fraction(text) <= threshold;
}

inline Document truncate_document(Document doc, std::size_t max_words = 4096) {
    if (doc.word_count <= max_words) return doc;
    doc.original_word_count = std::max(doc.original_word_count, doc.word_count);
    doc.text = first_words(doc.text, max_words);
    doc.word_count = max_words;
    doc.truncated = true;
    return doc;
}

/// Dedup key text: ASCII-lowercased, ASCII punctuation removed, whitespace
/// runs collapsed to one space and trimmed.
inline std::string normalize_for_dedup(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t start = pos;
        const char32_t cp = next_code_point(text, pos);
        if (is_unicode_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (cp < 0x80) {
            const char c = static_cast<char>(cp);
            if (!is_ascii_alnum(c) && c > 0x20 && c < 0x7F) continue;  // punctuation
            if (pending_space) out += ' ';
            pending_space = false;
            out += ascii_lower(c);
        } else {
            if (pending_space) out += ' ';
            pending_space = false;
            out.append(text.substr(start, pos - start));
        }
    }
    return out;
}

inline std::string dedup_key(std::string_view text) { return sha256_hex(normalize_for_dedup(text)); }

struct DedupResult {
    std::vector<Document> documents;
    CleaningReport report;
};

/// First occurrence of each normalization key wins; input order is kept.
inline DedupResult deduplicate(std::vector<Document> docs) {
    DedupResult result;
    result.report.input_count = docs.size();
    std::unordered_set<std::string> seen;
    for (auto& doc : docs) {
        if (!seen.insert(dedup_key(doc.text)).second) {
            ++result.report.dropped_duplicate;
            continue;
        }
        if (doc.truncated) ++result.report.truncated_count;
        result.documents.push_back(std::move(doc));
    }
    result.report.emitted_count = result.documents.size();
    return result;
}

/// Full cleaning pass: English check and truncation run in parallel per
/// document, dedup and id assignment are a serial merge in input order.
inline DedupResult ingest(std::vector<Document> docs, const IngestOptions& options = {}) {
    const std::size_t input_count = docs.size();
    std::vector<std::optional<Document>> cleaned(docs.size());
    parallel_for(docs.size(), options.workers, [&](std::size_t i) {
        bool english = false;
        try {
            english = is_english_enough(docs[i].text, options.non_english_threshold);
        } catch (const InvalidInput&) {
            english = false;
        }
        if (english) cleaned[i] = truncate_document(std::move(docs[i]), options.max_words);
    });

    std::vector<Document> kept;
    std::size_t non_english = 0;
    for (auto& c : cleaned) {
        if (c) {
            kept.push_back(std::move(*c));
        } else {
            ++non_english;
        }
    }
    DedupResult result = deduplicate(std::move(kept));

    std::unordered_map<std::string, std::size_t> id_uses;
    for (auto& doc : result.documents) {
        const std::size_t n = ++id_uses[doc.id];
        if (n > 1) doc.id += "-" + std::to_string(n);
    }

    result.report.input_count = input_count;
    result.report.dropped_non_english = non_english;
    return result;
}

inline std::vector<Document> load_documents(const std::filesystem::path& path) {
    std::vector<Document> docs;
    for_each_jsonl(path, [&](const json& j, std::size_t) { docs.push_back(j.get<Document>()); });
    return docs;
}

}  // namespace distill
