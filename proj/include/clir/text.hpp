#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clir/common.hpp"

namespace clir {

/// A lowercase UTF-8 token. Never empty, never contains whitespace.
using Term = std::string;

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

/// Decodes UTF-8 into Unicode scalar values. Invalid bytes decode to U+FFFD,
/// one replacement per bad byte, so the function never fails.
inline std::vector<uint32_t> utf8_decode(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    auto cont = [&](size_t k) {
        return i + k < s.size() && (uint8_t(s[i + k]) & 0xc0) == 0x80;
    };
    while (i < s.size()) {
        uint8_t b = uint8_t(s[i]);
        if (b < 0x80) {
            out.push_back(b);
            i += 1;
        } else if ((b >> 5) == 0x6 && cont(1)) {
            out.push_back(uint32_t(b & 0x1f) << 6 | (uint8_t(s[i + 1]) & 0x3f));
            i += 2;
        } else if ((b >> 4) == 0xe && cont(1) && cont(2)) {
            out.push_back(uint32_t(b & 0x0f) << 12 | uint32_t(uint8_t(s[i + 1]) & 0x3f) << 6 |
                          (uint8_t(s[i + 2]) & 0x3f));
            i += 3;
        } else if ((b >> 3) == 0x1e && cont(1) && cont(2) && cont(3)) {
            out.push_back(uint32_t(b & 0x07) << 18 | uint32_t(uint8_t(s[i + 1]) & 0x3f) << 12 |
                          uint32_t(uint8_t(s[i + 2]) & 0x3f) << 6 | (uint8_t(s[i + 3]) & 0x3f));
            i += 4;
        } else {
            out.push_back(0xfffd);
            i += 1;
        }
    }
    return out;
}

inline void utf8_append(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(char(cp));
    } else if (cp < 0x800) {
        out.push_back(char(0xc0 | (cp >> 6)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(char(0xe0 | (cp >> 12)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(char(0xf0 | (cp >> 18)));
        out.push_back(char(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(char(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(char(0x80 | (cp & 0x3f)));
    }
}

/// Number of Unicode scalar values in the string. All length thresholds in the
/// mining filters count scalars, not bytes.
inline int64_t char_count(std::string_view s) {
    return int64_t(utf8_decode(s).size());
}

// ---------------------------------------------------------------------------
// Case folding and token boundaries
// ---------------------------------------------------------------------------

/// Simple lowercase mapping covering ASCII plus the Latin blocks used by the
/// corpus languages (Latin-1, Extended-A, the Hausa hooked letters in
/// Extended-B, Extended Additional). Everything else passes through.
inline uint32_t lower_cp(uint32_t c) {
    if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 0x20 : c;
    if (c >= 0xc0 && c <= 0xde && c != 0xd7) return c + 0x20;
    if (c >= 0x100 && c <= 0x137) return c | 1;
    if (c >= 0x139 && c <= 0x148) return c % 2 == 1 ? c + 1 : c;
    if (c >= 0x14a && c <= 0x177) return c | 1;
    if (c == 0x178) return 0xff;
    if (c >= 0x179 && c <= 0x17e) return c % 2 == 1 ? c + 1 : c;
    switch (c) {
        case 0x181: return 0x253;  // B-hook
        case 0x18a: return 0x257;  // D-hook
        case 0x198: return 0x199;  // K-hook
        case 0x1b3: return 0x1b4;  // Y-hook
    }
    if (c >= 0x1e00 && c <= 0x1eff) return c | 1;
    return c;
}

/// Token boundary classification applied after lowercasing: ASCII letters and
/// digits continue a token; every other ASCII byte splits. Non-ASCII scalars
/// continue a token unless they are Unicode whitespace or common punctuation.
inline bool is_separator_cp(uint32_t c) {
    if (c < 0x80) return !((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'));
    switch (c) {
        case 0x85:
        case 0xa0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202f:
        case 0x205f:
        case 0x3000:
            return true;
    }
    if (c >= 0x2000 && c <= 0x200a) return true;  // spaces
    if (c >= 0xa1 && c <= 0xbf) return true;      // Latin-1 punctuation and signs
    if (c == 0xd7 || c == 0xf7) return true;
    if (c >= 0x2010 && c <= 0x205e) return true;  // general punctuation
    if (c >= 0x3001 && c <= 0x303f) return true;
    if (c >= 0xfe50 && c <= 0xfe6f) return true;
    if (c >= 0xff01 && c <= 0xff0f) return true;  // fullwidth punctuation rows
    if (c >= 0xff1a && c <= 0xff20) return true;
    if (c >= 0xff3b && c <= 0xff40) return true;
    if (c >= 0xff5b && c <= 0xff65) return true;
    return false;
}

/// Lowercases and splits on whitespace/punctuation, dropping empty fragments.
/// Deterministic and language-agnostic; apostrophes and hyphens split.
inline std::vector<Term> tokenize(std::string_view text) {
    std::vector<Term> out;
    std::string cur;
    for (uint32_t cp : utf8_decode(text)) {
        uint32_t lc = lower_cp(cp);
        if (is_separator_cp(lc)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            utf8_append(cur, lc);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace clir
