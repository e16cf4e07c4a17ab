#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace distill {

/// Decodes one UTF-8 code point starting at `pos` and advances `pos`.
/// Malformed sequences decode to U+FFFD and consume a single byte.
inline char32_t next_code_point(std::string_view text, std::size_t& pos) {
    const auto lead = static_cast<unsigned char>(text[pos]);
    if (lead < 0x80) {
        ++pos;
        return lead;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((lead & 0xE0) == 0xC0) {
        len = 2;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        len = 3;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        len = 4;
        cp = lead & 0x07;
    } else {
        ++pos;
        return U'\uFFFD';
    }
    if (pos + len > text.size()) {
        ++pos;
        return U'\uFFFD';
    }
    for (std::size_t i = 1; i < len; ++i) {
        const auto cont = static_cast<unsigned char>(text[pos + i]);
        if ((cont & 0xC0) != 0x80) {
            ++pos;
            return U'\uFFFD';
        }
        cp = (cp << 6) | (cont & 0x3F);
    }
    pos += len;
    return cp;
}

/// Unicode White_Space property.
constexpr bool is_unicode_space(char32_t cp) noexcept {
    return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 ||
           cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
           cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

constexpr bool is_ascii_alnum(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

constexpr char ascii_lower(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

/// Splits on maximal runs of Unicode whitespace. Views point into `text`.
inline std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t pos = 0;
    std::size_t start = std::string_view::npos;
    while (pos < text.size()) {
        const std::size_t here = pos;
        const char32_t cp = next_code_point(text, pos);
        if (is_unicode_space(cp)) {
            if (start != std::string_view::npos) {
                words.push_back(text.substr(start, here - start));
                start = std::string_view::npos;
            }
        } else if (start == std::string_view::npos) {
            start = here;
        }
    }
    if (start != std::string_view::npos) words.push_back(text.substr(start));
    return words;
}

/// Canonical word tokenization: maximal runs of non-whitespace.
inline std::vector<std::string> tokenize_words(std::string_view text) {
    const auto views = split_words(text);
    return {views.begin(), views.end()};
}

inline std::size_t count_words(std::string_view text) { return split_words(text).size(); }

/// Joins the first `limit` words of `text` with single spaces.
inline std::string first_words(std::string_view text, std::size_t limit) {
    const auto words = split_words(text);
    std::string out;
    for (std::size_t i = 0; i < words.size() && i < limit; ++i) {
        if (i != 0) out += ' ';
        out += words[i];
    }
    return out;
}

inline std::string_view trim_right(std::string_view s) {
    while (!s.empty()) {
        const char c = s.back();
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            s.remove_suffix(1);
        } else {
            break;
        }
    }
    return s;
}

inline std::string_view trim(std::string_view s) {
    s = trim_right(s);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\n' ||
                          s.front() == '\r' || s.front() == '\f' || s.front() == '\v')) {
        s.remove_prefix(1);
    }
    return s;
}

/// Replaces CRLF (and lone CR) with LF.
inline std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out += '\n';
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out += text[i];
        }
    }
    return out;
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto at = s.find(sep, start);
        parts.emplace_back(s.substr(start, at == std::string_view::npos ? at : at - start));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return parts;
}

}  // namespace distill
