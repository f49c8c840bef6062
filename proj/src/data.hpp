#pragma once

#include "errors.hpp"
#include "rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace actseg {

// Line-aligned parallel text.
struct ParallelCorpus {
    std::vector<std::string> src;
    std::vector<std::string> trg;

    size_t size() const { return src.size(); }
};

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Loads two files and rejects length-mismatched corpora.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& trg_path);

// Deterministic synthetic tasks standing in for real translation corpora.
//   copy:          target = source
//   reverse:       target = reversed source
//   digit-to-word: source = digit string, target = space-joined digit names
ParallelCorpus gen_toy_corpus(const std::string& task, int size, int len_min, int len_max,
                              int vocab_size, uint64_t seed);

// Tokenized parallel pair; target always ends with eos.
struct IdPair {
    std::vector<int> src;
    std::vector<int> trg;
};

// Padded minibatch with validity masks.
struct Batch {
    std::vector<std::vector<int>> src;            // padded with pad_id
    std::vector<std::vector<int>> trg;
    std::vector<std::vector<uint8_t>> src_mask;   // 1 exactly on non-pad positions
    std::vector<std::vector<uint8_t>> trg_mask;
    std::vector<int> src_len;
    std::vector<int> trg_len;

    int size() const { return static_cast<int>(src.size()); }
    int max_src_len() const { return src.empty() ? 0 : static_cast<int>(src[0].size()); }
};

Batch make_batch(const std::vector<IdPair>& pairs, const std::vector<size_t>& indices);

// Deterministic epoch-shuffled batch stream. Pairs exceeding max_len on
// either side are filtered up front. The stream position is a pure function
// of (seed, batch_index), so training can resume from a checkpointed batch
// counter and replay the identical order.
class BatchStream {
public:
    BatchStream(std::vector<IdPair> pairs, int batch_size, int max_len, uint64_t seed);

    Batch next();
    void seek(long batch_index);
    long batch_index() const { return batch_index_; }
    long batches_per_epoch() const;
    size_t kept() const { return pairs_.size(); }
    size_t filtered() const { return filtered_; }

private:
    void reshuffle(long epoch);

    std::vector<IdPair> pairs_;
    std::vector<size_t> order_;
    int batch_size_;
    uint64_t seed_;
    long batch_index_ = 0;
    long shuffled_epoch_ = -1;
    size_t filtered_ = 0;
};

} // namespace actseg
