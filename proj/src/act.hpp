#pragma once

#include "data.hpp"
#include "nn.hpp"

#include <span>
#include <string>
#include <vector>

namespace actseg {

// Sigmoid halting unit: h = sigmoid(W_h s + b_h).
struct HaltingParams {
    Parameter W_h; // 1 x act_hidden
    Parameter b_h; // scalar
    double epsilon = 0.01;

    HaltingParams() = default;
    HaltingParams(const std::string& prefix, int act_hidden, double eps = 0.01)
        : W_h(prefix + ".W_h", 1, act_hidden), b_h(prefix + ".b_h", 1, 1), epsilon(eps) {}
    void init(Rng& rng) {
        init_uniform(W_h, rng);
        init_uniform(b_h, rng);
    }
    void collect(std::vector<Parameter*>& out) {
        out.push_back(&W_h);
        out.push_back(&b_h);
    }
};

// Pure halting arithmetic shared by every ACT variant. p uses the
// pre-update halting sum, matching the line order of the update rule:
//   f  = [H + h >= 1 - eps]   (or forced)
//   p  = (1-f) h + f (1-H)
//   H' = H + h
struct HaltDecision {
    bool halted;
    double p;
    double H_next;
};

HaltDecision halting_decision(double H, double h, double epsilon, bool force = false);

struct HaltingStepOut {
    Value h;      // scalar score
    Value p;      // scalar probability
    bool halted;  // flag (discrete; not differentiated through)
    Value H_next; // updated running sum
};

// One halting evaluation on a state vector. Requires an open segment
// (0 <= H < 1 - eps). bias_offset perturbs the pre-activation; probes use it
// to differentiate with respect to a single step's halting score.
HaltingStepOut halting_step(Tape& tape, HaltingParams& p, Value s, Value H,
                            bool force = false, double bias_offset = 0.0);

// Per-position halting record for one sequence.
struct SegmentTrace {
    std::vector<double> score;   // h_t
    std::vector<double> prob;    // p_t
    std::vector<uint8_t> halt;   // f_t, including the forced end-of-sequence flush
    std::vector<int> segment;    // segment index per position
    std::vector<int> boundaries; // exclusive end positions; strictly increasing, last == length
    double remainder = 0.0;      // normalized R
    bool flushed = false;        // last segment closed by the flush rule

    int n_segments() const { return static_cast<int>(boundaries.size()); }
    std::vector<std::pair<int, int>> spans() const;
    // Table-style display over per-position symbols: "in| g|ru|pp|en".
    std::string render(const std::vector<std::string>& symbols) const;
};

// Segmenting encoder parameters: transition GRU over the ACT hidden size,
// output projection to the embedding size, halting unit.
struct ActEncParams {
    GruParams trans; // embed -> act_hidden
    Parameter W_o;   // embed x act_hidden
    Parameter b_o;   // embed
    HaltingParams halting;

    ActEncParams() = default;
    ActEncParams(const std::string& prefix, int embed_dim, int act_hidden, double eps = 0.01)
        : trans(prefix + ".trans", embed_dim, act_hidden),
          W_o(prefix + ".W_o", embed_dim, act_hidden),
          b_o(prefix + ".b_o", embed_dim, 1),
          halting(prefix + ".halt", act_hidden, eps) {}
    void init(Rng& rng) {
        trans.init(rng);
        init_uniform(W_o, rng);
        init_uniform(b_o, rng);
        halting.init(rng);
    }
    void collect(std::vector<Parameter*>& out) {
        trans.collect(out);
        out.push_back(&W_o);
        out.push_back(&b_o);
        halting.collect(out);
    }
};

struct ActEncodeOut {
    std::vector<Value> outputs; // segment embeddings, each (embed x 1)
    Value remainder;            // normalized R, scalar node
    SegmentTrace trace;
};

// Algorithm: read one character per step, halt to emit the probability-
// weighted mean output as a segment embedding, seed the next segment's
// recurrence with the mean state. The final position always closes the open
// segment (flush), so every character belongs to exactly one segment.
// Differentiable end to end; halt flags are treated as constants.
ActEncodeOut act_encode(Tape& tape, ActEncParams& p, EmbeddingTable& E_src,
                        std::span<const int> ids, std::span<const double> bias_offsets = {});

struct ActEncodeBatchOut {
    std::vector<std::vector<Value>> outputs; // per sequence segment embeddings
    std::vector<Value> remainders;
    std::vector<SegmentTrace> traces;
    int max_segments = 0;
    std::vector<std::vector<uint8_t>> seg_mask; // per sequence, padded to max_segments
};

// Lockstep masked evaluation over a padded batch. Per-sequence halting
// counters route each intermediate output to the right segment embedding;
// padding positions never update accumulators. Outputs are element-wise
// equal to per-sequence act_encode runs.
ActEncodeBatchOut act_encode_batched(Tape& tape, ActEncParams& p, EmbeddingTable& E_src,
                                     const Batch& batch);

// Segmenting decoder. The transition GRU state has the decoder RNN's size:
// on halt the mean ACT state becomes the next RNN state directly.
struct ActDecParams {
    GruParams trans; // (embed [+ ctx]) -> dec_hidden
    Parameter W_o;   // embed x dec_hidden
    Parameter b_o;
    HaltingParams halting;
    Parameter Wp, bp; // RNN state -> initial ACT state
    OutputLayer out;  // embed -> vocab scores
    int t_max = 200;
    bool feed_attention = false; // feed the attention vector into every ACT step

    ActDecParams() = default;
    ActDecParams(const std::string& prefix, int embed_dim, int dec_hidden, int vocab,
                 int ctx_dim, bool feed_att, double eps = 0.01)
        : trans(prefix + ".trans", embed_dim + (feed_att ? ctx_dim : 0), dec_hidden),
          W_o(prefix + ".W_o", embed_dim, dec_hidden),
          b_o(prefix + ".b_o", embed_dim, 1),
          halting(prefix + ".halt", dec_hidden, eps),
          Wp(prefix + ".Wp", dec_hidden, dec_hidden),
          bp(prefix + ".bp", dec_hidden, 1),
          out(prefix + ".out", embed_dim, vocab),
          feed_attention(feed_att) {}
    void init(Rng& rng) {
        trans.init(rng);
        init_uniform(W_o, rng);
        init_uniform(b_o, rng);
        halting.init(rng);
        init_uniform(Wp, rng);
        init_uniform(bp, rng);
        out.init(rng);
    }
    void collect(std::vector<Parameter*>& out_list) {
        trans.collect(out_list);
        out_list.push_back(&W_o);
        out_list.push_back(&b_o);
        halting.collect(out_list);
        out_list.push_back(&Wp);
        out_list.push_back(&bp);
        out.collect(out_list);
    }
};

struct ActDecTrainOut {
    Value xent_sum;  // summed per-position cross entropy
    Value remainder; // normalized by total consumed characters
    std::vector<std::pair<int, int>> spans; // RNN step -> consumed target span [begin, end)
    std::vector<std::vector<double>> att_rows; // attention weights per RNN step
};

// Teacher-forced pass: the inner loop consumes successive target symbols,
// scoring each against the output layer. On halt the mean ACT state becomes
// the next RNN state and the probability-weighted mean of embedded consumed
// symbols becomes the next RNN input. Terminates when all targets (ending
// with eos) are consumed.
ActDecTrainOut act_decode_train(Tape& tape, ActDecParams& p, GruParams& rnn,
                                AttentionParams& att, const AttentionContext& ctx, Value s0,
                                EmbeddingTable& E_trg, std::span<const int> targets);

struct ActDecInferOut {
    std::vector<int> ids;
    std::vector<std::pair<int, int>> spans; // RNN step -> generated span
    std::vector<double> probs;              // halting probability per generated symbol
    bool truncated = false;
};

// Greedy generation per the nested-loop scheme: every generated symbol is
// appended regardless of halting weight; stops on eos, on T_max in both
// loops, or at the global character budget (sets the truncation flag).
ActDecInferOut act_decode_infer(Tape& tape, ActDecParams& p, GruParams& rnn,
                                AttentionParams& att, const AttentionContext& ctx, Value s0,
                                EmbeddingTable& E_trg, int t_max, int char_budget);

struct DynamicDepthOut {
    Value s_mean;
    Value o_mean;
    int steps = 0;
    Value remainder; // R(t) = 1 - sum of pre-final scores
    std::vector<double> probs;
};

// Reference dynamic-depth ACT cell: ponders the same embedded input until
// the halting sum reaches 1 - eps or max_ponder, then returns weighted mean
// state/output. Hitting the cap forces the final probability to the
// remaining mass.
DynamicDepthOut dynamic_depth_reference(Tape& tape, ActEncParams& p, Value x, Value s_prev,
                                        int max_ponder);

} // namespace actseg
