#pragma once

#include "act.hpp"
#include "bpe.hpp"
#include "data.hpp"
#include "nn.hpp"
#include "vocab.hpp"

#include <memory>
#include <string>
#include <vector>

namespace actseg {

enum class Family { word, bpe, chars, act_enc, act_enc_dec };

Family family_from_string(const std::string& s);
std::string family_to_string(Family f);
bool family_uses_act_enc(Family f);
bool family_uses_act_dec(Family f);
// Default training length cap per model family.
int family_max_train_len(Family f);

struct ModelDims {
    int embed = 32;
    int enc_hidden = 32; // per direction
    int dec_hidden = 64;
    int act_hidden = 16;
    int att_hidden = 64;
    int enc_layers = 1;
};

// All learnable state plus the pieces needed to run a family end to end.
struct Model {
    Family family = Family::chars;
    ModelDims dims;
    double tau = 0.5;
    double epsilon = 0.01;
    int t_max = 200;
    int char_budget = 600;
    bool act_dec_feed_attention = false;

    Vocabulary src_vocab;
    Vocabulary trg_vocab;
    MergeTable merges; // bpe family

    EmbeddingTable E_src;
    EmbeddingTable E_trg;
    ActEncParams act_enc;
    LayerStack encoder;
    Parameter W_init, b_init; // decoder init from the final backward encoder state
    AttentionParams att;
    GruParams dec_rnn;
    OutputLayer readout; // standard decoder: scores over [state; context]
    ActDecParams act_dec;

    std::vector<Parameter*> params; // fixed declaration order (checkpoint order)

    int ctx_dim() const { return 2 * dims.enc_hidden; }
    void zero_grad();
    Parameter* find_param(const std::string& name);
};

// Constructs and seeds a model. The act-dec transition state must match the
// decoder state size (its mean becomes the next RNN state), so act_hidden
// only applies to the encoder side.
std::unique_ptr<Model> build_model(Family family, const ModelDims& dims,
                                   Vocabulary src_vocab, Vocabulary trg_vocab, double tau,
                                   double epsilon, uint64_t seed,
                                   bool act_dec_feed_attention = false);

struct SourceEncoding {
    std::vector<Value> annotations;
    std::vector<uint8_t> valid;
    Value dec_init;
    Value remainder;   // act families only
    SegmentTrace trace; // act families only
};

SourceEncoding encode_source(Tape& tape, Model& m, std::span<const int> src_ids,
                             GateRecord* gates = nullptr);

// Upstream half of encode_source: bidirectional stack plus decoder init over
// an already-embedded input sequence (lookup embeddings or ACT segment
// embeddings alike).
SourceEncoding encode_upstream(Tape& tape, Model& m, std::vector<Value> inputs,
                               GateRecord* gates = nullptr);

// Teacher-forced cross entropy (summed over positions) for one target
// sequence against a source encoding, dispatching per family.
struct DecodeLoss {
    Value xent;
    Value dec_remainder; // invalid unless the family uses the ACT decoder
};
DecodeLoss decode_teacher(Tape& tape, Model& m, const SourceEncoding& enc,
                          std::span<const int> trg_ids,
                          std::vector<std::vector<double>>* att_rows = nullptr);

struct PairLoss {
    Value xent;      // summed over timesteps
    Value remainder; // enc R + dec R where applicable; zero scalar otherwise
};

// Teacher-forced loss for one pair. When att_rows is given, records the
// attention weight vector of every decoder step.
PairLoss pair_loss(Tape& tape, Model& m, std::span<const int> src_ids,
                   std::span<const int> trg_ids,
                   std::vector<std::vector<double>>* att_rows = nullptr);

// Tokenization per family. Targets always end with eos.
std::vector<int> tokenize_source(const Model& m, const std::string& line);
std::vector<int> tokenize_target(const Model& m, const std::string& line);
std::string detokenize_target(const Model& m, const std::vector<int>& ids);
// Per-position source display symbols (for traces and probe headers).
std::vector<std::string> source_symbols(const Model& m, const std::string& line);

// One-symbol-per-step decoder interface consumed by greedy/beam search.
class Stepper {
public:
    virtual ~Stepper() = default;
    virtual int vocab() const = 0;
    virtual int start() = 0;
    // Returns log-probabilities over the target vocabulary and the successor
    // state handle after feeding prev_symbol.
    virtual std::pair<std::vector<double>, int> advance(int state, int prev_symbol) = 0;
};

// Standard attention decoder stepper (word/bpe/char/act-enc families).
std::unique_ptr<Stepper> make_stepper(Tape& tape, Model& m, const SourceEncoding& enc);

// ACT decoder viewed as a plain per-symbol stepper under the assumption that
// it halts after every step: p = 1 exactly, the mean state is the ACT state
// and the mean input is the previous symbol's embedding.
std::unique_ptr<Stepper> make_act_dec_saturated_stepper(Tape& tape, Model& m,
                                                        const SourceEncoding& enc);

} // namespace actseg
