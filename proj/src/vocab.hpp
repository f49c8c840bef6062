#pragma once

#include "errors.hpp"

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace actseg {

// Bidirectional symbol <-> id map. Ids 0..3 are reserved for the specials
// and are never remapped.
class Vocabulary {
public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;

    Vocabulary();

    // Adds a symbol if absent; returns its id either way.
    int add(const std::string& symbol);
    // Id for a symbol, unk_id if unknown.
    int id(std::string_view symbol) const;
    bool contains(std::string_view symbol) const;
    const std::string& symbol(int id) const;
    int size() const { return static_cast<int>(symbols_.size()); }

    // One symbol per line; reserved symbols are implied, so line N holds
    // the symbol with id N + 4.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    static Vocabulary from_chars(const std::vector<std::string>& lines);
    static Vocabulary from_whitespace_tokens(const std::vector<std::string>& lines);

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int> index_;
};

// One id per Unicode scalar value; unknown characters map to unk.
// Whitespace is an ordinary symbol.
std::vector<int> char_tokenize(std::string_view text, const Vocabulary& vocab);

// Inverse of char_tokenize for in-vocabulary ids (specials render as empty).
std::string detokenize_chars(const std::vector<int>& ids, const Vocabulary& vocab);

std::vector<int> word_tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize_words(const std::vector<int>& ids, const Vocabulary& vocab);

std::vector<std::string> split_whitespace(std::string_view text);

} // namespace actseg
