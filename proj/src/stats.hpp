#pragma once

#include "act.hpp"

#include <string>
#include <vector>

namespace actseg {

// Splits text at trace boundaries; concatenating the pieces reproduces the
// text. Trace length must equal the character count.
std::vector<std::string> extract_segments(const SegmentTrace& trace, const std::string& text);

struct SegmentStats {
    std::vector<std::pair<int, long>> length_histogram;       // sorted by length
    double mean_length = 0.0;                                 // characters per segment
    // per length: up to top_k (segment, count), count desc then lexicographic
    std::vector<std::pair<int, std::vector<std::pair<std::string, long>>>> top_segments;
    long total_segments = 0;

    // Text table: one row per length with its most frequent segments.
    std::string render_table() const;
    // Machine-readable: "length,segment,count" with quoting.
    std::string render_csv() const;
};

SegmentStats segment_stats(const std::vector<std::vector<std::string>>& corpus_segments,
                           int top_k = 10);

std::string csv_quote(const std::string& field);

} // namespace actseg
