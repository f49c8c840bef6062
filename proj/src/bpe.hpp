#pragma once

#include "errors.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace actseg {

// Ordered merge rules; rank = position in the list.
struct MergeTable {
    std::vector<std::pair<std::string, std::string>> merges;

    size_t size() const { return merges.size(); }
    bool empty() const { return merges.empty(); }

    // One merge per line: "left right", rank order.
    void save(const std::string& path) const;
    static MergeTable load(const std::string& path);
    std::string to_text() const;
    static MergeTable from_text(const std::string& text);
};

// Learns merges from a word-frequency map. Each iteration merges the most
// frequent adjacent symbol pair, ties broken lexicographically on
// (left, right). Words carry a non-mergeable end-of-word sentinel, so merges
// stay word-internal. Stops after n_merges, when no adjacent pair remains,
// or right after recording a merge whose pair occurred fewer than 2 times.
MergeTable bpe_learn(const std::map<std::string, long>& word_freq, int n_merges);

// Segments a word by replaying merges in rank order until none applies.
// Concatenating the returned segments reproduces the word exactly.
std::vector<std::string> bpe_apply(const std::string& word, const MergeTable& merges);

// Display form: non-final segments carry the "@@" continuation marker,
// joined by single spaces.
std::string bpe_display(const std::vector<std::string>& segments);

// Whole-line tokenization: whitespace-split, then per-word segments.
std::vector<std::string> bpe_tokenize_line(const std::string& line, const MergeTable& merges);

} // namespace actseg
