#include "data.hpp"

#include "vocab.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace actseg {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    for (const auto& l : lines) out << l << '\n';
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& trg_path) {
    ParallelCorpus c;
    c.src = read_lines(src_path);
    c.trg = read_lines(trg_path);
    if (c.src.size() != c.trg.size()) {
        throw DataError("parallel corpus line mismatch: " + src_path + " has " +
                        std::to_string(c.src.size()) + " lines, " + trg_path + " has " +
                        std::to_string(c.trg.size()));
    }
    if (c.src.empty()) throw DataError("empty corpus: " + src_path);
    return c;
}

ParallelCorpus gen_toy_corpus(const std::string& task, int size, int len_min, int len_max,
                              int vocab_size, uint64_t seed) {
    if (size < 1) throw UsageError("gen_toy_corpus: size must be >= 1");
    if (len_min < 1 || len_max < len_min) throw UsageError("gen_toy_corpus: bad length range");
    if (vocab_size < 1 || vocab_size > 26) {
        throw UsageError("gen_toy_corpus: vocab size must be in [1, 26]");
    }
    static const char* digit_names[10] = {"zero", "one", "two",   "three", "four",
                                          "five", "six", "seven", "eight", "nine"};
    Rng rng = Rng(seed).stream("corpus");
    ParallelCorpus c;
    for (int i = 0; i < size; ++i) {
        const int len = rng.uniform_int(len_min, len_max);
        std::string src;
        if (task == "digit-to-word") {
            for (int k = 0; k < len; ++k) src += static_cast<char>('0' + rng.uniform_int(0, 9));
        } else {
            for (int k = 0; k < len; ++k) {
                src += static_cast<char>('a' + rng.uniform_int(0, vocab_size - 1));
            }
        }
        std::string trg;
        if (task == "copy") {
            trg = src;
        } else if (task == "reverse") {
            trg.assign(src.rbegin(), src.rend());
        } else if (task == "digit-to-word") {
            for (size_t k = 0; k < src.size(); ++k) {
                if (k > 0) trg += ' ';
                trg += digit_names[src[k] - '0'];
            }
        } else {
            throw UsageError("gen_toy_corpus: unknown task '" + task + "'");
        }
        c.src.push_back(std::move(src));
        c.trg.push_back(std::move(trg));
    }
    return c;
}

Batch make_batch(const std::vector<IdPair>& pairs, const std::vector<size_t>& indices) {
    Batch b;
    int max_src = 0, max_trg = 0;
    for (size_t idx : indices) {
        max_src = std::max(max_src, static_cast<int>(pairs[idx].src.size()));
        max_trg = std::max(max_trg, static_cast<int>(pairs[idx].trg.size()));
    }
    for (size_t idx : indices) {
        const IdPair& p = pairs[idx];
        std::vector<int> s(static_cast<size_t>(max_src), Vocabulary::pad_id);
        std::vector<int> t(static_cast<size_t>(max_trg), Vocabulary::pad_id);
        std::vector<uint8_t> sm(static_cast<size_t>(max_src), 0);
        std::vector<uint8_t> tm(static_cast<size_t>(max_trg), 0);
        std::copy(p.src.begin(), p.src.end(), s.begin());
        std::copy(p.trg.begin(), p.trg.end(), t.begin());
        std::fill(sm.begin(), sm.begin() + static_cast<long>(p.src.size()), 1);
        std::fill(tm.begin(), tm.begin() + static_cast<long>(p.trg.size()), 1);
        b.src.push_back(std::move(s));
        b.trg.push_back(std::move(t));
        b.src_mask.push_back(std::move(sm));
        b.trg_mask.push_back(std::move(tm));
        b.src_len.push_back(static_cast<int>(p.src.size()));
        b.trg_len.push_back(static_cast<int>(p.trg.size()));
    }
    return b;
}

BatchStream::BatchStream(std::vector<IdPair> pairs, int batch_size, int max_len, uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    const size_t total = pairs.size();
    for (auto& p : pairs) {
        if (static_cast<int>(p.src.size()) <= max_len &&
            static_cast<int>(p.trg.size()) <= max_len && !p.src.empty() && !p.trg.empty()) {
            pairs_.push_back(std::move(p));
        }
    }
    filtered_ = total - pairs_.size();
    if (pairs_.empty()) {
        throw DataError("all " + std::to_string(total) +
                        " training pairs exceed the length cap " + std::to_string(max_len));
    }
    order_.resize(pairs_.size());
}

long BatchStream::batches_per_epoch() const {
    return static_cast<long>((pairs_.size() + batch_size_ - 1) / batch_size_);
}

void BatchStream::reshuffle(long epoch) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    Rng rng = Rng(seed_).stream("shuffle", static_cast<uint64_t>(epoch));
    for (size_t i = order_.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order_[i - 1], order_[j]);
    }
    shuffled_epoch_ = epoch;
}

Batch BatchStream::next() {
    const long bpe = batches_per_epoch();
    const long epoch = batch_index_ / bpe;
    const long within = batch_index_ % bpe;
    if (epoch != shuffled_epoch_) reshuffle(epoch);
    const size_t begin = static_cast<size_t>(within) * static_cast<size_t>(batch_size_);
    const size_t end = std::min(begin + static_cast<size_t>(batch_size_), pairs_.size());
    std::vector<size_t> idx(order_.begin() + static_cast<long>(begin),
                            order_.begin() + static_cast<long>(end));
    ++batch_index_;
    return make_batch(pairs_, idx);
}

void BatchStream::seek(long batch_index) {
    batch_index_ = batch_index;
    shuffled_epoch_ = -1;
}

} // namespace actseg
