#include "stats.hpp"

#include "utf8.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace actseg {

std::vector<std::string> extract_segments(const SegmentTrace& trace, const std::string& text) {
    const auto chars = utf8_split(text);
    if (chars.size() != trace.score.size()) {
        throw DataError("extract_segments: trace covers " + std::to_string(trace.score.size()) +
                        " positions but text has " + std::to_string(chars.size()) +
                        " characters");
    }
    std::vector<std::string> out;
    for (auto [begin, end] : trace.spans()) {
        std::string seg;
        for (int i = begin; i < end; ++i) seg += chars[static_cast<size_t>(i)];
        out.push_back(std::move(seg));
    }
    return out;
}

SegmentStats segment_stats(const std::vector<std::vector<std::string>>& corpus_segments,
                           int top_k) {
    if (corpus_segments.empty()) throw DataError("segment_stats: empty corpus");
    std::map<int, long> hist;
    std::map<int, std::map<std::string, long>> by_len;
    long total = 0;
    long char_total = 0;
    for (const auto& sentence : corpus_segments) {
        for (const auto& seg : sentence) {
            const int len = static_cast<int>(utf8_length(seg));
            hist[len] += 1;
            by_len[len][seg] += 1;
            ++total;
            char_total += len;
        }
    }
    SegmentStats s;
    s.total_segments = total;
    s.mean_length = total == 0 ? 0.0 : static_cast<double>(char_total) / static_cast<double>(total);
    for (auto& [len, cnt] : hist) s.length_histogram.emplace_back(len, cnt);
    for (auto& [len, counts] : by_len) {
        std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int>(items.size()) > top_k) items.resize(static_cast<size_t>(top_k));
        s.top_segments.emplace_back(len, std::move(items));
    }
    return s;
}

namespace {

// Whitespace rendered visibly in the table (the CSV keeps raw segments).
std::string visible(const std::string& seg) {
    std::string out;
    for (const auto& c : utf8_split(seg)) out += (c == " ") ? "␣" : c;
    return out;
}

} // namespace

std::string SegmentStats::render_table() const {
    char head[96];
    std::snprintf(head, sizeof head, "SegLen=%.4f segments=%ld\n", mean_length, total_segments);
    std::string out = head;
    out += "Len\tCount\tSegments\n";
    for (const auto& [len, items] : top_segments) {
        long count = 0;
        for (const auto& [l, c] : length_histogram) {
            if (l == len) count = c;
        }
        out += std::to_string(len) + "\t" + std::to_string(count) + "\t";
        for (size_t i = 0; i < items.size(); ++i) {
            if (i > 0) out += "; ";
            out += visible(items[i].first);
        }
        out += '\n';
    }
    return out;
}

std::string csv_quote(const std::string& field) {
    const bool needs = field.find_first_of(",\"\n") != std::string::npos;
    if (!needs) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string SegmentStats::render_csv() const {
    std::string out = "length,segment,count\n";
    for (const auto& [len, items] : top_segments) {
        for (const auto& [seg, count] : items) {
            out += std::to_string(len) + "," + csv_quote(seg) + "," + std::to_string(count) + "\n";
        }
    }
    return out;
}

} // namespace actseg
