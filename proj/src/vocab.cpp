#include "vocab.hpp"

#include "utf8.hpp"

#include <fstream>
#include <set>

namespace actseg {

Vocabulary::Vocabulary() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(s);
}

int Vocabulary::add(const std::string& symbol) {
    auto it = index_.find(symbol);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(symbols_.size());
    symbols_.push_back(symbol);
    index_.emplace(symbol, id);
    return id;
}

int Vocabulary::id(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    return it == index_.end() ? unk_id : it->second;
}

bool Vocabulary::contains(std::string_view symbol) const {
    return index_.count(std::string(symbol)) > 0;
}

const std::string& Vocabulary::symbol(int id) const {
    if (id < 0 || id >= size()) {
        throw DataError("vocabulary id " + std::to_string(id) + " out of range (size " +
                        std::to_string(size()) + ")");
    }
    return symbols_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (size_t i = 4; i < symbols_.size(); ++i) out << symbols_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        v.add(line);
    }
    return v;
}

Vocabulary Vocabulary::from_chars(const std::vector<std::string>& lines) {
    // Sorted set keeps ids independent of corpus order.
    std::set<std::string> seen;
    for (const auto& line : lines) {
        for (auto& ch : utf8_split(line)) seen.insert(ch);
    }
    Vocabulary v;
    for (const auto& s : seen) v.add(s);
    return v;
}

Vocabulary Vocabulary::from_whitespace_tokens(const std::vector<std::string>& lines) {
    std::set<std::string> seen;
    for (const auto& line : lines) {
        for (auto& tok : split_whitespace(line)) seen.insert(tok);
    }
    Vocabulary v;
    for (const auto& s : seen) v.add(s);
    return v;
}

std::vector<int> char_tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (auto& ch : utf8_split(text)) ids.push_back(vocab.id(ch));
    return ids;
}

std::string detokenize_chars(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id >= 4) out += vocab.symbol(id);
    }
    return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> toks;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
        size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t') ++j;
        if (j > i) toks.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return toks;
}

std::vector<int> word_tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (auto& tok : split_whitespace(text)) ids.push_back(vocab.id(tok));
    return ids;
}

std::string detokenize_words(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id < 4) continue;
        if (!out.empty()) out += ' ';
        out += vocab.symbol(id);
    }
    return out;
}

} // namespace actseg
