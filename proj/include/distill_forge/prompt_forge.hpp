#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distill_forge/errors.hpp"
#include "distill_forge/hashing.hpp"
#include "distill_forge/random.hpp"
#include "distill_forge/text.hpp"

namespace distill {

inline constexpr std::string_view kDocPlaceholder = "[doc]";
inline constexpr std::string_view kFollowingId = "following";
inline constexpr std::size_t kInstructionCount = 24;

/// SHA-256 of data/templates.tsv. Any edit to the shipped file must update it.
inline constexpr std::string_view kTemplateFileSha256 =
    "24bcff9d9c130e3b7f88ac113233c4179089e7005bec1c32f70cee843ab2bdc4";

struct PromptTemplate {
    std::string id;
    std::string body;

    bool operator==(const PromptTemplate&) const = default;
};

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto at = haystack.find(needle); at != std::string_view::npos; at = haystack.find(needle, at + needle.size())) {
        ++n;
    }
    return n;
}

inline void validate_template(const PromptTemplate& t) {
    const std::size_t n = count_occurrences(t.body, kDocPlaceholder);
    if (n != 1) {
        throw InvalidTemplate("template '" + t.id + "' must contain exactly one [doc] placeholder, found " +
                              std::to_string(n));
    }
}

/// The 24 instructions followed by the "following" instruction, byte-exact
/// with data/templates.tsv.
inline const std::array<PromptTemplate, kInstructionCount + 1>& builtin_templates() {
    static const std::array<PromptTemplate, kInstructionCount + 1> templates{{
        {"ps01", "[doc]  ===  Write a summary of the text above :  Summary:"},
        {"ps02", "[doc] How would you rephrase that in a few words?  Rephrase:"},
        {"ps03", "My college roommate asked me what this article means:  [doc]  So I recapped it in layman's terms:"},
        {"ps04", "Summarize this document: [doc]   Summary:"},
        {"ps05", "[doc]  ===  Given the above document, write one sentence to summarize:  Summary:"},
        {"ps06", "First, please read the article below.  [doc]  Now, can you write me an extremely short abstract for it?   An extremely short abstract:"},
        {"ps07", "[doc]  TL;DR:"},
        {"ps08", "Can you write an outline of the following article in a few points?  Article: [doc]  Outline:"},
        {"ps09", "Summarise the article:  [doc]  Summary:"},
        {"ps10", "In 2 or 3 sentences, what are the main points one should remember from this news article?  Article: [doc]  Main points:"},
        {"ps11", "Could you please generate a TLDR (Too Long Didn't Read) summary of the following news article?  Article: [doc] TLDR summary: "},
        {"ps12", "Condense the article down to the essentials to present it in the form of short cards in mobile news apps:  [doc]  Essentials:"},
        {"ps13", "Sum the following article in brief: [doc]  Breifs:"},
        {"ps14", "Extract key points from the article based on which the stock market could react:  [doc]  Key points:"},
        {"ps15", "Summarize this document: [doc]  Summary:"},
        {"ps16", "[doc] Given the above document, write a summary.  Summary:"},
        {"ps17", "Summarize: [doc]  Summary:"},
        {"ps18", "[doc] To sum up this document:"},
        {"ps19", "Sum up the following document:  [doc]  Summary:"},
        {"ps20", "What are the key points across these news articles:  Article: [doc]  Key points:"},
        {"ps21", "Synthesize these documents into a single one:  - [doc]  Summary:"},
        {"ps22", "I want to edit the following articles into a more concise summary:  Article: [doc]  Summary:"},
        {"ps23", "Write a summary of the following articles:  Document: [doc]  Summary:"},
        {"ps24", "I'm trying to distill these articles down into one:  Article: [doc]  Summary:"},
        {"following", "Follow the example(s) above and summarize the document below: Document: [doc] Summary:"},
    }};
    return templates;
}

class TemplateLibrary {
public:
    TemplateLibrary(std::vector<PromptTemplate> instructions, PromptTemplate following)
        : instructions_(std::move(instructions)), following_(std::move(following)) {
        if (instructions_.empty()) throw InvalidTemplate("template library has no instructions");
        for (const auto& t : instructions_) validate_template(t);
        validate_template(following_);
    }

    static const TemplateLibrary& builtin() {
        static const TemplateLibrary lib = [] {
            const auto& all = builtin_templates();
            return TemplateLibrary({all.begin(), all.end() - 1}, all.back());
        }();
        return lib;
    }

    /// Parses the tab-separated template file: `id<TAB>body` per line, '#'
    /// comment lines ignored, exactly one record with id "following".
    static TemplateLibrary load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open template file " + path.string());
        std::vector<PromptTemplate> instructions;
        std::vector<PromptTemplate> following;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw InvalidTemplate(path.string() + ":" + std::to_string(line_no) + ": missing tab separator");
            }
            PromptTemplate t{line.substr(0, tab), line.substr(tab + 1)};
            (t.id == kFollowingId ? following : instructions).push_back(std::move(t));
        }
        if (following.size() != 1) {
            throw InvalidTemplate(path.string() + ": expected exactly one 'following' template");
        }
        return TemplateLibrary(std::move(instructions), std::move(following.front()));
    }

    std::span<const PromptTemplate> instructions() const { return instructions_; }
    const PromptTemplate& following() const { return following_; }

    const PromptTemplate& find(std::string_view id) const {
        if (id == following_.id) return following_;
        for (const auto& t : instructions_) {
            if (t.id == id) return t;
        }
        throw InvalidTemplate("unknown template id '" + std::string(id) + "'");
    }

    /// Uniform choice over the instruction set.
    const PromptTemplate& random(Rng& rng) const {
        return instructions_[static_cast<std::size_t>(uniform_index(rng, instructions_.size()))];
    }

private:
    std::vector<PromptTemplate> instructions_;
    PromptTemplate following_;
};

struct SuccinctText {
    std::string text;
    bool succinct = false;
};

/// Keeps the first k words and appends "<omitted, l words in total>", where
/// l is the original word count. Texts of at most k words are returned as is.
inline SuccinctText make_succinct(std::string_view text, std::size_t k) {
    if (k == 0) throw InvalidParameter("make_succinct: k must be >= 1");
    const auto words = split_words(text);
    if (words.size() <= k) return {std::string(text), false};
    std::string out;
    for (std::size_t i = 0; i < k; ++i) {
        out.append(words[i]);
        out += ' ';
    }
    out += "<omitted, " + std::to_string(words.size()) + " words in total>";
    return {std::move(out), true};
}

struct DemonstrationPair {
    std::string id;
    std::string doc_text;
    std::string summary_text;
    bool doc_succinct = false;
    bool summary_succinct = false;
    std::size_t original_doc_words = 0;
    std::size_t original_summary_words = 0;
};

/// Builds a demonstration, applying succinct truncation independently to
/// document and summary when `succinct_k` is nonzero.
inline DemonstrationPair make_demonstration(std::string id, std::string_view doc, std::string_view summary,
                                            std::size_t succinct_k = 0) {
    DemonstrationPair pair;
    pair.id = std::move(id);
    pair.original_doc_words = count_words(doc);
    pair.original_summary_words = count_words(summary);
    if (succinct_k == 0) {
        pair.doc_text = std::string(doc);
        pair.summary_text = std::string(summary);
        return pair;
    }
    auto d = make_succinct(doc, succinct_k);
    auto s = make_succinct(summary, succinct_k);
    pair.doc_text = std::move(d.text);
    pair.doc_succinct = d.succinct;
    pair.summary_text = std::move(s.text);
    pair.summary_succinct = s.succinct;
    return pair;
}

struct RenderedPrompt {
    std::string text;
    std::size_t icd_count = 0;
    std::string template_id;
    std::size_t approx_words = 0;
};

/// Single-pass substitution: placeholder text inside the document is left alone.
inline std::string substitute_doc(const PromptTemplate& t, std::string_view doc_text) {
    validate_template(t);
    const auto at = t.body.find(kDocPlaceholder);
    std::string out;
    out.reserve(t.body.size() - kDocPlaceholder.size() + doc_text.size());
    out.append(t.body, 0, at);
    out.append(doc_text);
    out.append(t.body, at + kDocPlaceholder.size());
    return out;
}

inline RenderedPrompt render_zeroshot(const PromptTemplate& t, std::string_view doc_text) {
    RenderedPrompt p;
    p.text = substitute_doc(t, doc_text);
    p.template_id = t.id;
    p.approx_words = count_words(p.text);
    return p;
}

inline std::string demonstration_block(const DemonstrationPair& pair) {
    return "Document: " + pair.doc_text + " Summary: " + pair.summary_text;
}

inline constexpr std::string_view kBlockSeparator = "\n\n";

/// Prepends demonstrations in the given order while the whole prompt stays
/// within `word_budget` words, then appends the "following" instruction.
/// The first demonstration is mandatory.
inline RenderedPrompt render_fewshot(std::span<const DemonstrationPair> pairs, std::string_view doc_text,
                                     std::size_t max_icds, std::size_t word_budget,
                                     const PromptTemplate& following = TemplateLibrary::builtin().following()) {
    if (max_icds == 0) throw InvalidParameter("render_fewshot: max_icds must be >= 1");
    if (pairs.empty()) throw InvalidParameter("render_fewshot: no demonstrations supplied");

    const std::string instruction = substitute_doc(following, doc_text);
    std::size_t total_words = count_words(instruction);
    std::string text;
    std::size_t used = 0;
    const std::size_t limit = std::min(max_icds, pairs.size());
    for (; used < limit; ++used) {
        const std::string block = demonstration_block(pairs[used]);
        const std::size_t block_words = count_words(block);
        if (total_words + block_words > word_budget) {
            if (used == 0) {
                throw BudgetExceeded("render_fewshot: first demonstration needs " +
                                     std::to_string(total_words + block_words) + " words, budget is " +
                                     std::to_string(word_budget));
            }
            break;
        }
        total_words += block_words;
        text += block;
        text += kBlockSeparator;
    }
    text += instruction;

    RenderedPrompt p;
    p.text = std::move(text);
    p.icd_count = used;
    p.template_id = following.id;
    p.approx_words = total_words;
    return p;
}

}  // namespace distill
