#pragma once

#include "errors.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace actseg {

// Splits a UTF-8 string into one std::string per Unicode scalar value.
// Rejects malformed input (stray continuation bytes, truncated sequences,
// overlong encodings, surrogates, > U+10FFFF) with the byte offset.
inline std::vector<std::string> utf8_split(std::string_view text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        size_t len;
        uint32_t cp;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1Fu;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0Fu;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07u;
        } else {
            throw DataError("invalid UTF-8 at byte offset " + std::to_string(i));
        }
        if (i + len > text.size()) {
            throw DataError("truncated UTF-8 sequence at byte offset " + std::to_string(i));
        }
        for (size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) {
                throw DataError("invalid UTF-8 at byte offset " + std::to_string(i + k));
            }
            cp = (cp << 6) | (b & 0x3Fu);
        }
        const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                              (len == 4 && cp < 0x10000);
        if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            throw DataError("invalid UTF-8 at byte offset " + std::to_string(i));
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

inline size_t utf8_length(std::string_view text) { return utf8_split(text).size(); }

} // namespace actseg
