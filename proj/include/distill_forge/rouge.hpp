#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/text.hpp"

namespace distill::rouge {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline double f1_of(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

using Ngram = std::vector<std::string>;

struct NgramHash {
    std::size_t operator()(const Ngram& gram) const noexcept {
        std::size_t seed = gram.size();
        for (const auto& tok : gram) {
            seed ^= std::hash<std::string>{}(tok) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
        }
        return seed;
    }
};

using NgramCounts = std::unordered_map<Ngram, std::size_t, NgramHash>;

inline std::size_t ngram_total(std::size_t length, std::size_t n) { return length >= n ? length - n + 1 : 0; }

inline NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
    if (n == 0) throw InvalidParameter("ngrams: n must be >= 1");
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

/// Size of the clipped multiset intersection.
inline std::size_t clipped_matches(const NgramCounts& candidate, const NgramCounts& reference) {
    std::size_t matched = 0;
    for (const auto& [gram, count] : candidate) {
        if (auto it = reference.find(gram); it != reference.end()) matched += std::min(count, it->second);
    }
    return matched;
}

/// ROUGE-N of `candidate` against a single `reference`. Throws UndefinedScore
/// when neither side has an n-gram.
inline RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                          std::size_t n) {
    if (n == 0) throw InvalidParameter("rouge_n: n must be >= 1");
    const std::size_t cand_total = ngram_total(candidate.size(), n);
    const std::size_t ref_total = ngram_total(reference.size(), n);
    if (cand_total == 0 && ref_total == 0) {
        throw UndefinedScore("rouge_n: neither side has any " + std::to_string(n) + "-grams");
    }
    std::size_t matched = 0;
    if (cand_total != 0 && ref_total != 0) matched = clipped_matches(ngrams(candidate, n), ngrams(reference, n));

    RougeScore score;
    score.precision = cand_total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(cand_total);
    score.recall = ref_total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(ref_total);
    score.f1 = f1_of(score.precision, score.recall);
    return score;
}

/// Lowercased maximal runs of ASCII letters and digits.
inline std::vector<std::string> rouge_tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (is_ascii_alnum(c)) {
            current += ascii_lower(c);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
    const auto c = rouge_tokenize(candidate);
    const auto r = rouge_tokenize(reference);
    return rouge_n(std::span<const std::string>(c), std::span<const std::string>(r), n);
}

}  // namespace distill::rouge
