/// @file text.hpp
/// @brief UTF-8 scanning and the tokenizer shared by metrics and windowing.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reld/error.hpp"

namespace reld {

enum class Language { en, zh };

inline const char* to_string(Language lang) { return lang == Language::zh ? "ZH" : "EN"; }

inline Language parse_language(std::string_view s) {
    if (s == "EN" || s == "en" || s.empty()) return Language::en;
    if (s == "ZH" || s == "zh") return Language::zh;
    fail(ErrorKind::data, "unknown language '" + std::string(s) + "'");
}

namespace utf8 {

struct Codepoint {
    char32_t value;
    std::size_t length;  // bytes consumed
};

/// Decodes one codepoint at `pos`. Malformed bytes decode as U+FFFD of length 1.
inline Codepoint decode(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        return {0xFFFD, 1};
    }
    if (pos + extra >= s.size()) return {0xFFFD, 1};
    for (int i = 1; i <= extra; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, static_cast<std::size_t>(extra) + 1};
}

inline bool is_cjk_ideograph(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
           (cp >= 0x3040 && cp <= 0x30FF);
}

/// CJK symbols/punctuation and fullwidth punctuation blocks.
inline bool is_wide_punct(char32_t cp) {
    return (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF00 && cp <= 0xFF0F) ||
           (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
           (cp >= 0xFF5B && cp <= 0xFF65) || (cp >= 0x2010 && cp <= 0x205E);
}

inline bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
           cp == 0x3000 || cp == 0xA0;
}

}  // namespace utf8

/// Tokens of a text in one language. Tokens are never empty.
struct TokenSequence {
    std::vector<std::string> tokens;
    Language language = Language::en;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
};

/// A token together with the byte range of the raw unit it came from.
struct TokenSpan {
    std::size_t begin;
    std::size_t end;
    std::string token;
};

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
    return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
           (c >= 123 && c <= 126);
}

// Lowercases ASCII and strips leading/trailing punctuation (ASCII and wide).
inline std::string normalize_unit(std::string_view unit) {
    std::size_t b = 0, e = unit.size();
    while (b < e) {
        const auto cp = utf8::decode(unit, b);
        if (cp.value < 0x80 ? is_ascii_punct(static_cast<unsigned char>(cp.value))
                            : utf8::is_wide_punct(cp.value)) {
            b += cp.length;
        } else {
            break;
        }
    }
    while (e > b) {
        // step back to the start of the last codepoint
        std::size_t s = e - 1;
        while (s > b && (static_cast<unsigned char>(unit[s]) & 0xC0) == 0x80) --s;
        const auto cp = utf8::decode(unit, s);
        if (cp.value < 0x80 ? is_ascii_punct(static_cast<unsigned char>(cp.value))
                            : utf8::is_wide_punct(cp.value)) {
            e = s;
        } else {
            break;
        }
    }
    std::string out(unit.substr(b, e - b));
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

}  // namespace detail

/// Tokenizes with byte spans. EN: whitespace units, lowercased, punctuation
/// stripped at both ends. ZH: every CJK ideograph is its own token; Latin runs
/// are split on whitespace and treated as EN units; wide punctuation separates.
inline std::vector<TokenSpan> tokenize_spans(std::string_view text, Language lang) {
    std::vector<TokenSpan> spans;
    std::size_t unit_begin = std::string_view::npos;

    const auto flush = [&](std::size_t end) {
        if (unit_begin == std::string_view::npos) return;
        auto tok = detail::normalize_unit(text.substr(unit_begin, end - unit_begin));
        if (!tok.empty()) spans.push_back({unit_begin, end, std::move(tok)});
        unit_begin = std::string_view::npos;
    };

    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto cp = utf8::decode(text, pos);
        if (utf8::is_space(cp.value)) {
            flush(pos);
        } else if (lang == Language::zh && utf8::is_cjk_ideograph(cp.value)) {
            flush(pos);
            spans.push_back({pos, pos + cp.length, std::string(text.substr(pos, cp.length))});
        } else if (lang == Language::zh && utf8::is_wide_punct(cp.value)) {
            flush(pos);
        } else if (unit_begin == std::string_view::npos) {
            unit_begin = pos;
        }
        pos += cp.length;
    }
    flush(text.size());
    return spans;
}

inline TokenSequence tokenize(std::string_view text, Language lang) {
    TokenSequence seq;
    seq.language = lang;
    for (auto& span : tokenize_spans(text, lang)) seq.tokens.push_back(std::move(span.token));
    return seq;
}

/// Sentence-terminal characters accepted by the answer quality gate.
inline bool is_sentence_terminal(char32_t cp) {
    return cp == '.' || cp == '!' || cp == '?' || cp == 0x3002 || cp == 0xFF01 || cp == 0xFF1F;
}

/// Last codepoint of `s` that is not whitespace, or 0 when there is none.
inline char32_t last_visible_codepoint(std::string_view s) {
    char32_t last = 0;
    for (std::size_t pos = 0; pos < s.size();) {
        const auto cp = utf8::decode(s, pos);
        if (!utf8::is_space(cp.value)) last = cp.value;
        pos += cp.length;
    }
    return last;
}

/// Comparison form of free text: ASCII-lowercased, trimmed, internal whitespace
/// collapsed, trailing punctuation removed.
inline std::string canonicalize(std::string_view text) {
    std::string collapsed;
    bool pending_space = false;
    for (std::size_t pos = 0; pos < text.size();) {
        const auto cp = utf8::decode(text, pos);
        if (utf8::is_space(cp.value)) {
            pending_space = !collapsed.empty();
        } else {
            if (pending_space) collapsed += ' ';
            pending_space = false;
            for (std::size_t i = 0; i < cp.length; ++i) {
                char c = text[pos + i];
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
                collapsed += c;
            }
        }
        pos += cp.length;
    }
    // strip trailing punctuation codepoints
    while (!collapsed.empty()) {
        std::size_t s = collapsed.size() - 1;
        while (s > 0 && (static_cast<unsigned char>(collapsed[s]) & 0xC0) == 0x80) --s;
        const auto cp = utf8::decode(collapsed, s);
        const bool punct = cp.value < 0x80 ? detail::is_ascii_punct(static_cast<unsigned char>(cp.value))
                                           : utf8::is_wide_punct(cp.value);
        if (!punct) break;
        collapsed.erase(s);
        while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
    }
    return collapsed;
}

inline TokenSequence make_tokens(std::vector<std::string> tokens, Language lang = Language::en) {
    return TokenSequence{std::move(tokens), lang};
}

}  // namespace reld
