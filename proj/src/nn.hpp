#pragma once

#include "rng.hpp"
#include "tape.hpp"

#include <optional>
#include <span>
#include <vector>

namespace actseg {

void init_uniform(Parameter& p, Rng& rng, double scale = 0.08);

// GRU with the update gate on the candidate:
//   z = sigmoid(Wz [x; s] + bz)
//   r = sigmoid(Wr [x; s] + br)
//   s' = z (.) tanh(Ws x + Wg (s (.) r)) + (1 - z) (.) s
// Works on single columns and on column-batched matrices alike.
struct GruParams {
    int input_dim = 0;
    int hidden_dim = 0;
    Parameter Wz, bz, Wr, br; // gates over [x; s]
    Parameter Ws, Wg;         // candidate paths (no bias, x and gated-state)

    GruParams() = default;
    GruParams(const std::string& prefix, int input_dim, int hidden_dim);
    void init(Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

struct GruStepOut {
    Value s;
    Value z;
    Value r;
};

GruStepOut gru_step(Tape& tape, GruParams& p, Value s_prev, Value x);

// Lookup table, one row per symbol.
struct EmbeddingTable {
    Parameter E; // vocab x embed

    EmbeddingTable() = default;
    EmbeddingTable(const std::string& name, int vocab, int embed) : E(name, vocab, embed) {}
    int vocab_size() const { return E.value.rows; }
    int dim() const { return E.value.cols; }
};

Value embed_lookup(Tape& tape, EmbeddingTable& table, int id);

// Additive attention: score_i = v tanh(Wk a_i + Wq q + b).
struct AttentionParams {
    Parameter Wk, Wq, v, b; // v stored as a (1 x att) row

    AttentionParams() = default;
    AttentionParams(const std::string& prefix, int ann_dim, int query_dim, int att_dim);
    void init(Rng& rng);
    void collect(std::vector<Parameter*>& out);
};

// Per-sequence precomputation: Wk a_i + b for every annotation.
struct AttentionContext {
    std::vector<Value> annotations;
    std::vector<Value> keys;
    Value ann_matrix; // annotations stacked as columns
    const std::vector<uint8_t>* valid = nullptr;
};

AttentionContext attention_context(Tape& tape, AttentionParams& p,
                                   std::span<const Value> annotations,
                                   const std::vector<uint8_t>* valid = nullptr);

struct AttendOut {
    Value context;
    Value weights; // (positions x 1), masked entries zero
};

AttendOut attend(Tape& tape, AttentionParams& p, const AttentionContext& ctx, Value query);

// Stack of bidirectional GRU layers; layer i consumes the concatenated
// forward/backward states of layer i-1.
struct BiGruLayer {
    GruParams fwd;
    GruParams bwd;
};

struct LayerStack {
    std::vector<BiGruLayer> layers;

    LayerStack() = default;
    LayerStack(const std::string& prefix, int input_dim, int hidden_per_dir, int n_layers);
    void init(Rng& rng);
    void collect(std::vector<Parameter*>& out);
    int output_dim() const;
};

// Mean gate activations captured during encoding, one row per
// (layer, direction, gate), one column per position.
struct GateRecord {
    std::vector<std::vector<double>> fwd_update, fwd_reset, bwd_update, bwd_reset; // [layer][pos]
};

struct EncodeOut {
    std::vector<Value> annotations;  // per position, top layer fwd||bwd
    Value bwd_final;                 // top layer backward state after its full sweep
};

// Masked positions contribute no state updates and emit zero annotations;
// annotations at valid positions match a run on the truncated sequence.
EncodeOut encode_bidirectional(Tape& tape, LayerStack& stack, std::span<const Value> inputs,
                               std::span<const uint8_t> mask, GateRecord* gates = nullptr);

Value project_output(Tape& tape, Parameter& W, Parameter& b, Value s);

struct OutputLayer {
    Parameter W, b;

    OutputLayer() = default;
    OutputLayer(const std::string& prefix, int in_dim, int vocab);
    void init(Rng& rng);
    void collect(std::vector<Parameter*>& out);
    Value logits(Tape& tape, Value o) { return project_output(tape, W, b, o); }
    Value distribution(Tape& tape, Value o) { return tape.softmax(logits(tape, o)); }
};

} // namespace actseg
