#include "bpe.hpp"

#include "utf8.hpp"
#include "vocab.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace actseg {

namespace {

constexpr const char* kEow = "</w>";

using SymbolWord = std::vector<std::string>;

SymbolWord to_symbols(const std::string& word) {
    SymbolWord s = utf8_split(word);
    s.push_back(kEow);
    return s;
}

void apply_merge(SymbolWord& w, const std::string& left, const std::string& right) {
    SymbolWord out;
    out.reserve(w.size());
    size_t i = 0;
    while (i < w.size()) {
        if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
            out.push_back(left + right);
            i += 2;
        } else {
            out.push_back(w[i]);
            ++i;
        }
    }
    w = std::move(out);
}

} // namespace

void MergeTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write merge table: " + path);
    out << to_text();
}

std::string MergeTable::to_text() const {
    std::string out;
    for (const auto& [l, r] : merges) {
        out += l;
        out += ' ';
        out += r;
        out += '\n';
    }
    return out;
}

MergeTable MergeTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read merge table: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

MergeTable MergeTable::from_text(const std::string& text) {
    MergeTable t;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
            throw DataError("malformed merge at line " + std::to_string(lineno));
        }
        t.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return t;
}

MergeTable bpe_learn(const std::map<std::string, long>& word_freq, int n_merges) {
    if (word_freq.empty()) throw DataError("bpe_learn: empty corpus");
    if (n_merges < 0) throw UsageError("bpe_learn: negative merge count");

    std::vector<std::pair<SymbolWord, long>> words;
    words.reserve(word_freq.size());
    for (const auto& [w, f] : word_freq) words.emplace_back(to_symbols(w), f);

    MergeTable table;
    for (int step = 0; step < n_merges; ++step) {
        // std::map gives the lexicographic tie-break for free.
        std::map<std::pair<std::string, std::string>, long> counts;
        for (const auto& [syms, freq] : words) {
            for (size_t i = 0; i + 1 < syms.size(); ++i) {
                if (syms[i] == kEow || syms[i + 1] == kEow) continue;
                counts[{syms[i], syms[i + 1]}] += freq;
            }
        }
        if (counts.empty()) break;
        auto best = counts.begin();
        for (auto it = counts.begin(); it != counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        table.merges.push_back(best->first);
        for (auto& [syms, freq] : words) apply_merge(syms, best->first.first, best->first.second);
        if (best->second < 2) break;
    }
    return table;
}

std::vector<std::string> bpe_apply(const std::string& word, const MergeTable& merges) {
    SymbolWord syms = to_symbols(word);
    for (const auto& [l, r] : merges.merges) apply_merge(syms, l, r);
    syms.pop_back(); // sentinel never merges, so it is always the final symbol
    if (syms.empty()) syms.push_back("");
    return syms;
}

std::string bpe_display(const std::vector<std::string>& segments) {
    std::string out;
    for (size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) out += ' ';
        out += segments[i];
        if (i + 1 < segments.size()) out += "@@";
    }
    return out;
}

std::vector<std::string> bpe_tokenize_line(const std::string& line, const MergeTable& merges) {
    std::vector<std::string> toks;
    for (const auto& word : split_whitespace(line)) {
        auto segs = bpe_apply(word, merges);
        for (size_t i = 0; i < segs.size(); ++i) {
            toks.push_back(i + 1 < segs.size() ? segs[i] + "@@" : segs[i]);
        }
    }
    return toks;
}

} // namespace actseg
