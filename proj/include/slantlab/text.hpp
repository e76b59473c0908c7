#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace slantlab {

// Tokenization used by query matching, stem counts and word counting:
// case-fold ASCII, split on anything that is not alphanumeric. Bytes >= 0x80
// are kept as token characters so UTF-8 words survive intact.
inline bool is_token_char(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           c >= 0x80;
}

inline char fold_ascii(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string fold_case(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) out += fold_ascii(c);
    return out;
}

inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (is_token_char(static_cast<unsigned char>(c))) {
            cur += fold_ascii(c);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// Whitespace-delimited chunks, for @mention / #hashtag style counts.
inline std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> chunks;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' ||
                                   text[i] == '\r'))
            ++i;
        size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n' &&
               text[j] != '\r')
            ++j;
        if (j > i) chunks.push_back(text.substr(i, j - i));
        i = j;
    }
    return chunks;
}

inline std::string strip_urls(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool first = true;
    for (auto chunk : split_whitespace(text)) {
        if (chunk.starts_with("http://") || chunk.starts_with("https://")) continue;
        if (!first) out += ' ';
        out.append(chunk);
        first = false;
    }
    return out;
}

} // namespace slantlab
