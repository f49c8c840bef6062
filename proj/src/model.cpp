#include "model.hpp"

#include "utf8.hpp"

#include <algorithm>
#include <cmath>

namespace actseg {

Family family_from_string(const std::string& s) {
    if (s == "word") return Family::word;
    if (s == "bpe") return Family::bpe;
    if (s == "char") return Family::chars;
    if (s == "act-enc") return Family::act_enc;
    if (s == "act-enc+act-dec") return Family::act_enc_dec;
    throw UsageError("unknown model family '" + s +
                     "' (expected word|bpe|char|act-enc|act-enc+act-dec)");
}

std::string family_to_string(Family f) {
    switch (f) {
        case Family::word: return "word";
        case Family::bpe: return "bpe";
        case Family::chars: return "char";
        case Family::act_enc: return "act-enc";
        case Family::act_enc_dec: return "act-enc+act-dec";
    }
    return "?";
}

bool family_uses_act_enc(Family f) {
    return f == Family::act_enc || f == Family::act_enc_dec;
}

bool family_uses_act_dec(Family f) { return f == Family::act_enc_dec; }

int family_max_train_len(Family f) {
    switch (f) {
        case Family::word:
        case Family::bpe: return 60;
        case Family::chars: return 200;
        case Family::act_enc:
        case Family::act_enc_dec: return 150;
    }
    return 200;
}

void Model::zero_grad() {
    for (Parameter* p : params) p->zero_grad();
}

Parameter* Model::find_param(const std::string& name) {
    for (Parameter* p : params) {
        if (p->name == name) return p;
    }
    return nullptr;
}

std::unique_ptr<Model> build_model(Family family, const ModelDims& dims, Vocabulary src_vocab,
                                   Vocabulary trg_vocab, double tau, double epsilon,
                                   uint64_t seed, bool act_dec_feed_attention) {
    if (dims.embed < 1 || dims.enc_hidden < 1 || dims.dec_hidden < 1 || dims.act_hidden < 1 ||
        dims.att_hidden < 1 || dims.enc_layers < 1) {
        throw UsageError("model dimensions must be positive");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw UsageError("epsilon must be in (0, 1)");
    auto m = std::make_unique<Model>();
    m->family = family;
    m->dims = dims;
    m->tau = tau;
    m->epsilon = epsilon;
    m->act_dec_feed_attention = act_dec_feed_attention;
    m->src_vocab = std::move(src_vocab);
    m->trg_vocab = std::move(trg_vocab);

    const int ctx = 2 * dims.enc_hidden;
    m->E_src = EmbeddingTable("E_src", m->src_vocab.size(), dims.embed);
    m->E_trg = EmbeddingTable("E_trg", m->trg_vocab.size(), dims.embed);
    if (family_uses_act_enc(family)) {
        m->act_enc = ActEncParams("act_enc", dims.embed, dims.act_hidden, epsilon);
    }
    m->encoder = LayerStack("enc", dims.embed, dims.enc_hidden, dims.enc_layers);
    m->W_init = Parameter("dec_init.W", dims.dec_hidden, dims.enc_hidden);
    m->b_init = Parameter("dec_init.b", dims.dec_hidden, 1);
    m->att = AttentionParams("att", ctx, dims.dec_hidden, dims.att_hidden);
    m->dec_rnn = GruParams("dec_rnn", dims.embed + ctx, dims.dec_hidden);
    if (family_uses_act_dec(family)) {
        m->act_dec = ActDecParams("act_dec", dims.embed, dims.dec_hidden, m->trg_vocab.size(),
                                  ctx, m->act_dec_feed_attention, epsilon);
    } else {
        m->readout = OutputLayer("readout", dims.dec_hidden + ctx, m->trg_vocab.size());
    }

    m->params.push_back(&m->E_src.E);
    m->params.push_back(&m->E_trg.E);
    if (family_uses_act_enc(family)) m->act_enc.collect(m->params);
    m->encoder.collect(m->params);
    m->params.push_back(&m->W_init);
    m->params.push_back(&m->b_init);
    m->att.collect(m->params);
    m->dec_rnn.collect(m->params);
    if (family_uses_act_dec(family)) {
        m->act_dec.collect(m->params);
    } else {
        m->readout.collect(m->params);
    }

    Rng init = Rng(seed).stream("init");
    for (Parameter* p : m->params) init_uniform(*p, init);
    // Halting units start biased toward early halting (short segments);
    // pondering is then learned where the data rewards it. A unit starting
    // near h = 0.5 drifts into whole-sequence segments before the ponder
    // penalty can act.
    if (family_uses_act_enc(family)) m->act_enc.halting.b_h.value.v[0] = 1.0;
    if (family_uses_act_dec(family)) m->act_dec.halting.b_h.value.v[0] = 1.0;
    return m;
}

SourceEncoding encode_upstream(Tape& tape, Model& m, std::vector<Value> inputs,
                               GateRecord* gates) {
    SourceEncoding out;
    out.valid.assign(inputs.size(), 1);
    auto enc = encode_bidirectional(tape, m.encoder, inputs, out.valid, gates);
    out.annotations = std::move(enc.annotations);
    out.dec_init =
        tape.tanh(tape.add(tape.matmul(tape.param(m.W_init), enc.bwd_final), tape.param(m.b_init)));
    return out;
}

SourceEncoding encode_source(Tape& tape, Model& m, std::span<const int> src_ids,
                             GateRecord* gates) {
    std::vector<Value> inputs;
    Value remainder;
    SegmentTrace trace;
    if (family_uses_act_enc(m.family)) {
        auto enc = act_encode(tape, m.act_enc, m.E_src, src_ids);
        inputs = std::move(enc.outputs);
        remainder = enc.remainder;
        trace = std::move(enc.trace);
    } else {
        inputs.reserve(src_ids.size());
        for (int id : src_ids) inputs.push_back(embed_lookup(tape, m.E_src, id));
    }
    SourceEncoding out = encode_upstream(tape, m, std::move(inputs), gates);
    out.remainder = remainder;
    out.trace = std::move(trace);
    return out;
}

DecodeLoss decode_teacher(Tape& tape, Model& m, const SourceEncoding& enc,
                          std::span<const int> trg_ids,
                          std::vector<std::vector<double>>* att_rows) {
    if (trg_ids.empty() || trg_ids.back() != Vocabulary::eos_id) {
        throw DataError("decode_teacher: target must end with eos");
    }
    AttentionContext ctx = attention_context(tape, m.att, enc.annotations, &enc.valid);
    DecodeLoss out;

    if (family_uses_act_dec(m.family)) {
        auto dec = act_decode_train(tape, m.act_dec, m.dec_rnn, m.att, ctx, enc.dec_init,
                                    m.E_trg, trg_ids);
        out.xent = dec.xent_sum;
        out.dec_remainder = dec.remainder;
        if (att_rows) *att_rows = std::move(dec.att_rows);
        return out;
    }

    Value s = enc.dec_init;
    Value loss = tape.zeros(1, 1);
    for (size_t t = 0; t < trg_ids.size(); ++t) {
        const int prev = t == 0 ? Vocabulary::bos_id : trg_ids[t - 1];
        Value e = embed_lookup(tape, m.E_trg, prev);
        AttendOut a = attend(tape, m.att, ctx, s);
        if (att_rows) {
            const Tensor& w = tape.data(a.weights);
            att_rows->emplace_back(w.v.begin(), w.v.end());
        }
        s = gru_step(tape, m.dec_rnn, s, tape.vstack2(e, a.context)).s;
        Value logits = m.readout.logits(tape, tape.vstack2(s, a.context));
        loss = tape.add(loss, tape.softmax_xent(logits, trg_ids[t]));
    }
    out.xent = loss;
    return out;
}

PairLoss pair_loss(Tape& tape, Model& m, std::span<const int> src_ids,
                   std::span<const int> trg_ids, std::vector<std::vector<double>>* att_rows) {
    SourceEncoding enc = encode_source(tape, m, src_ids);
    DecodeLoss dec = decode_teacher(tape, m, enc, trg_ids, att_rows);

    PairLoss out;
    out.xent = dec.xent;
    out.remainder = family_uses_act_enc(m.family) ? enc.remainder : tape.zeros(1, 1);
    if (dec.dec_remainder.valid()) out.remainder = tape.add(out.remainder, dec.dec_remainder);
    return out;
}

std::vector<int> tokenize_source(const Model& m, const std::string& line) {
    switch (m.family) {
        case Family::word: return word_tokenize(line, m.src_vocab);
        case Family::bpe: {
            std::vector<int> ids;
            for (const auto& tok : bpe_tokenize_line(line, m.merges)) {
                ids.push_back(m.src_vocab.id(tok));
            }
            return ids;
        }
        default: return char_tokenize(line, m.src_vocab);
    }
}

std::vector<int> tokenize_target(const Model& m, const std::string& line) {
    std::vector<int> ids;
    switch (m.family) {
        case Family::word: ids = word_tokenize(line, m.trg_vocab); break;
        case Family::bpe: {
            for (const auto& tok : bpe_tokenize_line(line, m.merges)) {
                ids.push_back(m.trg_vocab.id(tok));
            }
            break;
        }
        default: ids = char_tokenize(line, m.trg_vocab); break;
    }
    ids.push_back(Vocabulary::eos_id);
    return ids;
}

std::string detokenize_target(const Model& m, const std::vector<int>& ids) {
    switch (m.family) {
        case Family::word: return detokenize_words(ids, m.trg_vocab);
        case Family::bpe: {
            std::string joined = detokenize_words(ids, m.trg_vocab);
            std::string out;
            size_t i = 0;
            while (i < joined.size()) {
                if (i + 2 < joined.size() && joined[i] == '@' && joined[i + 1] == '@' &&
                    joined[i + 2] == ' ') {
                    i += 3; // continuation marker joins the next segment
                } else {
                    out += joined[i++];
                }
            }
            return out;
        }
        default: return detokenize_chars(ids, m.trg_vocab);
    }
}

std::vector<std::string> source_symbols(const Model& m, const std::string& line) {
    switch (m.family) {
        case Family::word: return split_whitespace(line);
        case Family::bpe: return bpe_tokenize_line(line, m.merges);
        default: return utf8_split(line);
    }
}

namespace {

std::vector<double> log_probs_from_logits(const Tensor& logits) {
    double mx = logits.v[0];
    for (double x : logits.v) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : logits.v) z += std::exp(x - mx);
    const double lse = mx + std::log(z);
    std::vector<double> lp(logits.v.size());
    for (size_t i = 0; i < lp.size(); ++i) lp[i] = logits.v[i] - lse;
    return lp;
}

class StandardStepper final : public Stepper {
public:
    StandardStepper(Tape& tape, Model& m, const SourceEncoding& enc)
        : tape_(tape), m_(m), ctx_(attention_context(tape, m.att, enc.annotations, nullptr)) {
        states_.push_back(enc.dec_init);
    }

    int vocab() const override { return m_.trg_vocab.size(); }
    int start() override { return 0; }

    std::pair<std::vector<double>, int> advance(int state, int prev_symbol) override {
        Value s = states_[static_cast<size_t>(state)];
        Value e = embed_lookup(tape_, m_.E_trg, prev_symbol);
        AttendOut a = attend(tape_, m_.att, ctx_, s);
        Value s_next = gru_step(tape_, m_.dec_rnn, s, tape_.vstack2(e, a.context)).s;
        Value logits = m_.readout.logits(tape_, tape_.vstack2(s_next, a.context));
        states_.push_back(s_next);
        return {log_probs_from_logits(tape_.data(logits)),
                static_cast<int>(states_.size() - 1)};
    }

private:
    Tape& tape_;
    Model& m_;
    AttentionContext ctx_;
    std::vector<Value> states_;
};

class ActDecSaturatedStepper final : public Stepper {
public:
    ActDecSaturatedStepper(Tape& tape, Model& m, const SourceEncoding& enc)
        : tape_(tape), m_(m), ctx_(attention_context(tape, m.att, enc.annotations, nullptr)) {
        states_.push_back(enc.dec_init);
    }

    int vocab() const override { return m_.trg_vocab.size(); }
    int start() override { return 0; }

    std::pair<std::vector<double>, int> advance(int state, int prev_symbol) override {
        Value s = states_[static_cast<size_t>(state)];
        Value e = embed_lookup(tape_, m_.E_trg, prev_symbol);
        AttendOut a = attend(tape_, m_.att, ctx_, s);
        Value s_rnn = gru_step(tape_, m_.dec_rnn, s, tape_.vstack2(e, a.context)).s;
        Value a0 = tape_.add(tape_.matmul(tape_.param(m_.act_dec.Wp), s_rnn),
                             tape_.param(m_.act_dec.bp));
        Value act_in = m_.act_dec.feed_attention ? tape_.vstack2(e, a.context) : e;
        Value a1 = gru_step(tape_, m_.act_dec.trans, a0, act_in).s;
        Value o = project_output(tape_, m_.act_dec.W_o, m_.act_dec.b_o, a1);
        Value logits = m_.act_dec.out.logits(tape_, o);
        states_.push_back(a1);
        return {log_probs_from_logits(tape_.data(logits)),
                static_cast<int>(states_.size() - 1)};
    }

private:
    Tape& tape_;
    Model& m_;
    AttentionContext ctx_;
    std::vector<Value> states_;
};

} // namespace

std::unique_ptr<Stepper> make_stepper(Tape& tape, Model& m, const SourceEncoding& enc) {
    if (family_uses_act_dec(m.family)) {
        throw UsageError("the ACT decoder has no standard stepper; decode greedily via "
                         "act_decode_infer");
    }
    return std::make_unique<StandardStepper>(tape, m, enc);
}

std::unique_ptr<Stepper> make_act_dec_saturated_stepper(Tape& tape, Model& m,
                                                        const SourceEncoding& enc) {
    if (!family_uses_act_dec(m.family)) {
        throw UsageError("model family has no ACT decoder");
    }
    return std::make_unique<ActDecSaturatedStepper>(tape, m, enc);
}

} // namespace actseg
