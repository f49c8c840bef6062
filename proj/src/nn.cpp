#include "nn.hpp"

namespace actseg {

void init_uniform(Parameter& p, Rng& rng, double scale) {
    for (auto& x : p.value.v) x = rng.uniform(-scale, scale);
}

GruParams::GruParams(const std::string& prefix, int input, int hidden)
    : input_dim(input),
      hidden_dim(hidden),
      Wz(prefix + ".Wz", hidden, input + hidden),
      bz(prefix + ".bz", hidden, 1),
      Wr(prefix + ".Wr", hidden, input + hidden),
      br(prefix + ".br", hidden, 1),
      Ws(prefix + ".Ws", hidden, input),
      Wg(prefix + ".Wg", hidden, hidden) {}

void GruParams::init(Rng& rng) {
    for (Parameter* p : {&Wz, &bz, &Wr, &br, &Ws, &Wg}) init_uniform(*p, rng);
}

void GruParams::collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&Wz, &bz, &Wr, &br, &Ws, &Wg}) out.push_back(p);
}

GruStepOut gru_step(Tape& tape, GruParams& p, Value s_prev, Value x) {
    const Tensor& xd = tape.data(x);
    const Tensor& sd = tape.data(s_prev);
    if (xd.rows != p.input_dim || sd.rows != p.hidden_dim || xd.cols != sd.cols) {
        throw NumericError("gru_step: input " + xd.shape_str() + " / state " + sd.shape_str() +
                           " do not conform to (" + std::to_string(p.input_dim) + ", " +
                           std::to_string(p.hidden_dim) + ")");
    }
    Value xs = tape.vstack2(x, s_prev);
    Value z = tape.sigmoid(tape.add(tape.matmul(tape.param(p.Wz), xs), tape.param(p.bz)));
    Value r = tape.sigmoid(tape.add(tape.matmul(tape.param(p.Wr), xs), tape.param(p.br)));
    Value cand = tape.tanh(tape.add(tape.matmul(tape.param(p.Ws), x),
                                    tape.matmul(tape.param(p.Wg), tape.mul(s_prev, r))));
    Value s = tape.add(tape.mul(z, cand), tape.mul(tape.one_minus(z), s_prev));
    return {s, z, r};
}

Value embed_lookup(Tape& tape, EmbeddingTable& table, int id) {
    return tape.lookup_row(tape.param(table.E), id);
}

AttentionParams::AttentionParams(const std::string& prefix, int ann_dim, int query_dim,
                                 int att_dim)
    : Wk(prefix + ".Wk", att_dim, ann_dim),
      Wq(prefix + ".Wq", att_dim, query_dim),
      v(prefix + ".v", 1, att_dim),
      b(prefix + ".b", att_dim, 1) {}

void AttentionParams::init(Rng& rng) {
    for (Parameter* p : {&Wk, &Wq, &v, &b}) init_uniform(*p, rng);
}

void AttentionParams::collect(std::vector<Parameter*>& out) {
    for (Parameter* p : {&Wk, &Wq, &v, &b}) out.push_back(p);
}

AttentionContext attention_context(Tape& tape, AttentionParams& p,
                                   std::span<const Value> annotations,
                                   const std::vector<uint8_t>* valid) {
    if (annotations.empty()) throw NumericError("attend: no annotations");
    AttentionContext ctx;
    ctx.annotations.assign(annotations.begin(), annotations.end());
    Value Wk = tape.param(p.Wk);
    Value bias = tape.param(p.b);
    for (Value a : annotations) {
        ctx.keys.push_back(tape.add(tape.matmul(Wk, a), bias));
    }
    ctx.ann_matrix = tape.hstack(annotations);
    ctx.valid = valid;
    return ctx;
}

AttendOut attend(Tape& tape, AttentionParams& p, const AttentionContext& ctx, Value query) {
    if (ctx.valid) {
        bool any = false;
        for (uint8_t m : *ctx.valid) any = any || m;
        if (!any) throw NumericError("attend: all positions masked");
    }
    Value q = tape.matmul(tape.param(p.Wq), query);
    Value vrow = tape.param(p.v);
    std::vector<Value> scores;
    scores.reserve(ctx.keys.size());
    for (Value key : ctx.keys) {
        scores.push_back(tape.matmul(vrow, tape.tanh(tape.add(key, q))));
    }
    Value score_col = tape.vstack(scores);
    Value weights = tape.softmax(score_col, ctx.valid);
    Value context = tape.matmul(ctx.ann_matrix, weights);
    return {context, weights};
}

LayerStack::LayerStack(const std::string& prefix, int input_dim, int hidden_per_dir,
                       int n_layers) {
    int in = input_dim;
    for (int l = 0; l < n_layers; ++l) {
        BiGruLayer layer;
        layer.fwd = GruParams(prefix + ".l" + std::to_string(l) + ".fwd", in, hidden_per_dir);
        layer.bwd = GruParams(prefix + ".l" + std::to_string(l) + ".bwd", in, hidden_per_dir);
        layers.push_back(std::move(layer));
        in = 2 * hidden_per_dir;
    }
}

void LayerStack::init(Rng& rng) {
    for (auto& l : layers) {
        l.fwd.init(rng);
        l.bwd.init(rng);
    }
}

void LayerStack::collect(std::vector<Parameter*>& out) {
    for (auto& l : layers) {
        l.fwd.collect(out);
        l.bwd.collect(out);
    }
}

int LayerStack::output_dim() const {
    return layers.empty() ? 0 : 2 * layers.back().fwd.hidden_dim;
}

EncodeOut encode_bidirectional(Tape& tape, LayerStack& stack, std::span<const Value> inputs,
                               std::span<const uint8_t> mask, GateRecord* gates) {
    if (inputs.empty()) throw NumericError("encode_bidirectional: empty sequence");
    if (mask.size() != inputs.size()) {
        throw NumericError("encode_bidirectional: mask length " + std::to_string(mask.size()) +
                           " != sequence length " + std::to_string(inputs.size()));
    }
    const int T = static_cast<int>(inputs.size());
    std::vector<Value> layer_in(inputs.begin(), inputs.end());
    Value bwd_final;
    if (gates) {
        gates->fwd_update.assign(stack.layers.size(), {});
        gates->fwd_reset.assign(stack.layers.size(), {});
        gates->bwd_update.assign(stack.layers.size(), {});
        gates->bwd_reset.assign(stack.layers.size(), {});
    }
    auto mean_of = [&](Value gate) {
        const Tensor& g = tape.data(gate);
        double acc = 0.0;
        for (double x : g.v) acc += x;
        return acc / static_cast<double>(g.size());
    };
    for (size_t l = 0; l < stack.layers.size(); ++l) {
        BiGruLayer& layer = stack.layers[l];
        const int h = layer.fwd.hidden_dim;
        std::vector<Value> fwd_states(static_cast<size_t>(T));
        std::vector<Value> bwd_states(static_cast<size_t>(T));
        if (gates) {
            gates->fwd_update[l].assign(static_cast<size_t>(T), 0.0);
            gates->fwd_reset[l].assign(static_cast<size_t>(T), 0.0);
            gates->bwd_update[l].assign(static_cast<size_t>(T), 0.0);
            gates->bwd_reset[l].assign(static_cast<size_t>(T), 0.0);
        }
        Value s = tape.zeros(h, 1);
        for (int t = 0; t < T; ++t) {
            if (mask[static_cast<size_t>(t)]) {
                auto out = gru_step(tape, layer.fwd, s, layer_in[static_cast<size_t>(t)]);
                s = out.s;
                if (gates) {
                    gates->fwd_update[l][static_cast<size_t>(t)] = mean_of(out.z);
                    gates->fwd_reset[l][static_cast<size_t>(t)] = mean_of(out.r);
                }
            }
            fwd_states[static_cast<size_t>(t)] = s;
        }
        s = tape.zeros(h, 1);
        for (int t = T - 1; t >= 0; --t) {
            if (mask[static_cast<size_t>(t)]) {
                auto out = gru_step(tape, layer.bwd, s, layer_in[static_cast<size_t>(t)]);
                s = out.s;
                if (gates) {
                    gates->bwd_update[l][static_cast<size_t>(t)] = mean_of(out.z);
                    gates->bwd_reset[l][static_cast<size_t>(t)] = mean_of(out.r);
                }
            }
            bwd_states[static_cast<size_t>(t)] = s;
        }
        bwd_final = s;
        std::vector<Value> next(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) {
            if (mask[static_cast<size_t>(t)]) {
                next[static_cast<size_t>(t)] = tape.vstack2(fwd_states[static_cast<size_t>(t)],
                                                            bwd_states[static_cast<size_t>(t)]);
            } else {
                next[static_cast<size_t>(t)] = tape.zeros(2 * h, 1);
            }
        }
        layer_in = std::move(next);
    }
    return {std::move(layer_in), bwd_final};
}

Value project_output(Tape& tape, Parameter& W, Parameter& b, Value s) {
    return tape.add(tape.matmul(tape.param(W), s), tape.param(b));
}

OutputLayer::OutputLayer(const std::string& prefix, int in_dim, int vocab)
    : W(prefix + ".W", vocab, in_dim), b(prefix + ".b", vocab, 1) {}

void OutputLayer::init(Rng& rng) {
    init_uniform(W, rng);
    init_uniform(b, rng);
}

void OutputLayer::collect(std::vector<Parameter*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

} // namespace actseg
