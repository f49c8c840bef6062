#pragma once

#include "config.hpp"
#include "metrics.hpp"
#include "model.hpp"

#include <memory>
#include <string>

namespace actseg {

// Flattened view of every parameter, used by the gradient-check harness.
std::vector<double> flatten_params(const Model& m);
void unflatten_params(Model& m, std::span<const double> theta);

// Full training run driven by key=value configuration. Builds vocabularies
// (and BPE merges) from the training data, or resumes from `resume`.
// Writes <ckpt_dir>/best.ckpt on validation improvement and
// <ckpt_dir>/last.ckpt at the end; appends to `log` when set.
// Returns a one-line summary.
std::string cmd_train(const KeyValueConfig& cfg);

// Builds a tiny seeded model of the family, draws a random sentence pair
// (vocab 12, lengths 3..7), and central-difference-checks the full training
// loss L = XENT + tau * R against the analytic gradients of every parameter.
// The relative-error denominator is floored at 1e-4: at this loss scale the
// finite-difference noise is about 1e-9, so coordinates whose gradient sits
// below the floor are judged by an absolute difference of 1e-8 instead of a
// meaningless quotient of two noise terms.
double cmd_gradcheck(const std::string& family, int dims, uint64_t seed,
                     double step = 1e-5, double tau = 0.5);

void cmd_gen_corpus(const std::string& task, int size, int len_min, int len_max, int vocab_size,
                    uint64_t seed, const std::string& src_path, const std::string& trg_path);

void cmd_bpe_learn(const std::string& corpus_path, int n_merges, const std::string& merges_out);

MetricReport cmd_eval(const std::string& hyp_path, const std::string& ref_path);

// Pipe-delimited segmentation of one line (ACT families via the learned
// trace, char per character, bpe via the merge table).
std::string segment_line(Model& m, const std::string& line);
std::vector<std::string> segment_line_pieces(Model& m, const std::string& line);

struct StatsOutput {
    std::string table;
    std::string csv;
    double mean_length = 0.0;
};

StatsOutput cmd_stats(Model& m, const std::string& input_path, int top_k = 10);

} // namespace actseg
