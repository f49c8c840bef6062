#include "act.hpp"

#include "vocab.hpp"

#include <algorithm>

namespace actseg {

HaltDecision halting_decision(double H, double h, double epsilon, bool force) {
    const bool halted = force || (H + h >= 1.0 - epsilon);
    return {halted, halted ? 1.0 - H : h, H + h};
}

HaltingStepOut halting_step(Tape& tape, HaltingParams& params, Value s, Value H, bool force,
                            double bias_offset) {
    const double Hd = tape.scalar(H);
    if (Hd < 0.0 || Hd >= 1.0 - params.epsilon) {
        throw NumericError("halting_step: running sum " + std::to_string(Hd) +
                           " is not an open segment");
    }
    Value pre = tape.add(tape.matmul(tape.param(params.W_h), s), tape.param(params.b_h));
    if (bias_offset != 0.0) pre = tape.add(pre, tape.constant_scalar(bias_offset));
    Value h = tape.sigmoid(pre);
    const bool halted = halting_decision(Hd, tape.scalar(h), params.epsilon, force).halted;
    Value p = halted ? tape.one_minus(H) : h;
    Value H_next = tape.add(H, h);
    return {h, p, halted, H_next};
}

std::vector<std::pair<int, int>> SegmentTrace::spans() const {
    std::vector<std::pair<int, int>> out;
    int begin = 0;
    for (int end : boundaries) {
        out.emplace_back(begin, end);
        begin = end;
    }
    return out;
}

std::string SegmentTrace::render(const std::vector<std::string>& symbols) const {
    if (symbols.size() != score.size()) {
        throw DataError("trace length " + std::to_string(score.size()) +
                        " != symbol count " + std::to_string(symbols.size()));
    }
    std::string out;
    for (auto [begin, end] : spans()) {
        for (int i = begin; i < end; ++i) out += symbols[static_cast<size_t>(i)];
        out += '|';
    }
    return out;
}

ActEncodeOut act_encode(Tape& tape, ActEncParams& params, EmbeddingTable& E_src,
                        std::span<const int> ids, std::span<const double> bias_offsets) {
    if (ids.empty()) throw DataError("act_encode: empty input");
    if (!bias_offsets.empty() && bias_offsets.size() != ids.size()) {
        throw UsageError("act_encode: bias offset length mismatch");
    }
    for (int id : ids) {
        if (id < 0 || id >= E_src.vocab_size()) {
            throw DataError("act_encode: id " + std::to_string(id) + " out of vocabulary range");
        }
    }
    const int T = static_cast<int>(ids.size());
    const int act_hidden = params.trans.hidden_dim;
    const int embed = E_src.dim();

    ActEncodeOut out;
    out.trace.score.reserve(static_cast<size_t>(T));

    Value s = tape.zeros(act_hidden, 1);
    Value s_mean = tape.zeros(act_hidden, 1);
    Value o_mean = tape.zeros(embed, 1);
    Value H = tape.zeros(1, 1);
    Value R_acc = tape.zeros(1, 1);
    int seg = 0;

    for (int t = 0; t < T; ++t) {
        Value x = embed_lookup(tape, E_src, ids[static_cast<size_t>(t)]);
        s = gru_step(tape, params.trans, s, x).s;
        Value o = project_output(tape, params.W_o, params.b_o, s);
        const bool last = (t == T - 1);
        const double offs = bias_offsets.empty() ? 0.0 : bias_offsets[static_cast<size_t>(t)];
        const double H_pre = tape.scalar(H);
        auto halt = halting_step(tape, params.halting, s, H, last, offs);
        const bool natural =
            halting_decision(H_pre, tape.scalar(halt.h), params.halting.epsilon, false).halted;

        s_mean = tape.wacc(s_mean, halt.p, s);
        o_mean = tape.wacc(o_mean, halt.p, o);
        if (!halt.halted) R_acc = tape.add(R_acc, halt.h);

        out.trace.score.push_back(tape.scalar(halt.h));
        out.trace.prob.push_back(tape.scalar(halt.p));
        out.trace.halt.push_back(halt.halted ? 1 : 0);
        out.trace.segment.push_back(seg);

        if (halt.halted) {
            out.outputs.push_back(o_mean);
            out.trace.boundaries.push_back(t + 1);
            if (last && !natural) out.trace.flushed = true;
            s = s_mean;
            s_mean = tape.zeros(act_hidden, 1);
            o_mean = tape.zeros(embed, 1);
            H = tape.zeros(1, 1);
            ++seg;
        } else {
            H = halt.H_next;
        }
    }
    out.remainder = tape.scale(tape.one_minus(R_acc), 1.0 / static_cast<double>(T));
    out.trace.remainder = tape.scalar(out.remainder);
    return out;
}

namespace {

Tensor row_mask(const std::vector<double>& xs) {
    Tensor t(1, static_cast<int>(xs.size()));
    t.v = xs;
    return t;
}

Tensor rows_broadcast(const std::vector<double>& xs, int rows) {
    Tensor t(rows, static_cast<int>(xs.size()));
    for (int i = 0; i < rows; ++i)
        for (size_t j = 0; j < xs.size(); ++j) t.at(i, static_cast<int>(j)) = xs[j];
    return t;
}

} // namespace

ActEncodeBatchOut act_encode_batched(Tape& tape, ActEncParams& params, EmbeddingTable& E_src,
                                     const Batch& batch) {
    const int B = batch.size();
    if (B == 0) throw DataError("act_encode_batched: empty batch");
    const int T = batch.max_src_len();
    const int act_hidden = params.trans.hidden_dim;
    const int embed = E_src.dim();
    const double eps = params.halting.epsilon;

    ActEncodeBatchOut out;
    out.outputs.resize(static_cast<size_t>(B));
    out.traces.resize(static_cast<size_t>(B));

    Value S = tape.zeros(act_hidden, B);
    Value S_mean = tape.zeros(act_hidden, B);
    Value O_mean = tape.zeros(embed, B);
    Value H = tape.zeros(1, B);
    Value R_acc = tape.zeros(1, B);
    std::vector<int> seg_counter(static_cast<size_t>(B), 0); // halting counter per sequence

    std::vector<int> ids_t(static_cast<size_t>(B));
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < B; ++j) ids_t[static_cast<size_t>(j)] = batch.src[static_cast<size_t>(j)][static_cast<size_t>(t)];
        Value X = tape.lookup_rows(tape.param(E_src.E), ids_t);
        Value S_new = gru_step(tape, params.trans, S, X).s;
        Value O = project_output(tape, params.W_o, params.b_o, S_new);
        Value h_row = tape.sigmoid(
            tape.add(tape.matmul(tape.param(params.halting.W_h), S_new), tape.param(params.halting.b_h)));

        // Flags from forward values; masks enter the graph as constants.
        std::vector<double> active(static_cast<size_t>(B)), f(static_cast<size_t>(B));
        std::vector<bool> natural(static_cast<size_t>(B), false);
        for (int j = 0; j < B; ++j) {
            const bool act = t < batch.src_len[static_cast<size_t>(j)];
            active[static_cast<size_t>(j)] = act ? 1.0 : 0.0;
            if (!act) continue;
            const double Hj = tape.data(H).at(0, j);
            const double hj = tape.data(h_row).at(0, j);
            const bool last = (t == batch.src_len[static_cast<size_t>(j)] - 1);
            natural[static_cast<size_t>(j)] = halting_decision(Hj, hj, eps, false).halted;
            f[static_cast<size_t>(j)] = (natural[static_cast<size_t>(j)] || last) ? 1.0 : 0.0;
        }
        std::vector<double> not_f(static_cast<size_t>(B)), keep_h(static_cast<size_t>(B));
        for (int j = 0; j < B; ++j) {
            not_f[static_cast<size_t>(j)] = 1.0 - f[static_cast<size_t>(j)];
            keep_h[static_cast<size_t>(j)] = not_f[static_cast<size_t>(j)] * active[static_cast<size_t>(j)];
        }

        // p = [(1-f) h + f (1-H)] (.) active
        Value p_row = tape.add(tape.mul(h_row, tape.constant(row_mask(not_f))),
                               tape.mul(tape.one_minus(H), tape.constant(row_mask(f))));
        p_row = tape.mul(p_row, tape.constant(row_mask(active)));

        Value S_incl = tape.wacc(S_mean, p_row, S_new);
        Value O_incl = tape.wacc(O_mean, p_row, O);
        R_acc = tape.add(R_acc, tape.mul(h_row, tape.constant(row_mask(keep_h))));

        // emissions and per-position trace
        for (int j = 0; j < B; ++j) {
            if (active[static_cast<size_t>(j)] == 0.0) continue;
            SegmentTrace& tr = out.traces[static_cast<size_t>(j)];
            tr.score.push_back(tape.data(h_row).at(0, j));
            tr.prob.push_back(tape.data(p_row).at(0, j));
            tr.halt.push_back(f[static_cast<size_t>(j)] == 1.0 ? 1 : 0);
            tr.segment.push_back(seg_counter[static_cast<size_t>(j)]);
            if (f[static_cast<size_t>(j)] == 1.0) {
                out.outputs[static_cast<size_t>(j)].push_back(tape.slice_col(O_incl, j));
                tr.boundaries.push_back(t + 1);
                if (!natural[static_cast<size_t>(j)]) tr.flushed = true;
                ++seg_counter[static_cast<size_t>(j)];
            }
        }

        // carry state: halted columns continue from the mean state
        Value not_f_rep = tape.constant(rows_broadcast(not_f, act_hidden));
        Value f_rep = tape.constant(rows_broadcast(f, act_hidden));
        S = tape.add(tape.mul(S_new, not_f_rep), tape.mul(S_incl, f_rep));
        S_mean = tape.mul(S_incl, not_f_rep);
        O_mean = tape.mul(O_incl, tape.constant(rows_broadcast(not_f, embed)));
        H = tape.mul(tape.add(H, tape.mul(h_row, tape.constant(row_mask(active)))),
                     tape.constant(row_mask(not_f)));
    }

    for (int j = 0; j < B; ++j) {
        const int len = batch.src_len[static_cast<size_t>(j)];
        Value r = tape.slice_col(R_acc, j);
        out.remainders.push_back(tape.scale(tape.one_minus(r), 1.0 / static_cast<double>(len)));
        out.traces[static_cast<size_t>(j)].remainder = tape.scalar(out.remainders.back());
        out.max_segments = std::max(out.max_segments, seg_counter[static_cast<size_t>(j)]);
    }
    for (int j = 0; j < B; ++j) {
        std::vector<uint8_t> m(static_cast<size_t>(out.max_segments), 0);
        std::fill(m.begin(), m.begin() + seg_counter[static_cast<size_t>(j)], 1);
        out.seg_mask.push_back(std::move(m));
    }
    return out;
}

ActDecTrainOut act_decode_train(Tape& tape, ActDecParams& params, GruParams& rnn,
                                AttentionParams& att, const AttentionContext& ctx, Value s0,
                                EmbeddingTable& E_trg, std::span<const int> targets) {
    if (targets.empty() || targets.back() != Vocabulary::eos_id) {
        throw DataError("act_decode_train: targets must end with eos");
    }
    const int K = static_cast<int>(targets.size());
    const int dec_hidden = rnn.hidden_dim;
    const int embed = E_trg.dim();

    ActDecTrainOut out;
    out.xent_sum = tape.zeros(1, 1);
    Value R_acc = tape.zeros(1, 1);
    Value s = s0;
    Value e = embed_lookup(tape, E_trg, Vocabulary::bos_id);
    int pos = 0;

    while (pos < K) {
        AttendOut a = attend(tape, att, ctx, s);
        const Tensor& w = tape.data(a.weights);
        out.att_rows.emplace_back(w.v.begin(), w.v.end());
        Value s_rnn = gru_step(tape, rnn, s, tape.vstack2(e, a.context)).s;
        Value act_state = tape.add(tape.matmul(tape.param(params.Wp), s_rnn), tape.param(params.bp));
        Value input = e;
        Value s_mean = tape.zeros(dec_hidden, 1);
        Value o_mean = tape.zeros(embed, 1);
        Value H = tape.zeros(1, 1);
        const int span_begin = pos;

        while (pos < K) {
            Value act_in = params.feed_attention ? tape.vstack2(input, a.context) : input;
            act_state = gru_step(tape, params.trans, act_state, act_in).s;
            Value o = project_output(tape, params.W_o, params.b_o, act_state);
            const int y = targets[static_cast<size_t>(pos)];
            out.xent_sum = tape.add(out.xent_sum, tape.softmax_xent(params.out.logits(tape, o), y));
            const bool last = (pos == K - 1);
            auto halt = halting_step(tape, params.halting, act_state, H, last);
            Value y_emb = embed_lookup(tape, E_trg, y);
            s_mean = tape.wacc(s_mean, halt.p, act_state);
            o_mean = tape.wacc(o_mean, halt.p, y_emb);
            if (!halt.halted) R_acc = tape.add(R_acc, halt.h);
            input = y_emb;
            ++pos;
            if (halt.halted) break;
            H = halt.H_next;
        }
        out.spans.emplace_back(span_begin, pos);
        s = s_mean;
        e = o_mean;
    }
    out.remainder = tape.scale(tape.one_minus(R_acc), 1.0 / static_cast<double>(K));
    return out;
}

ActDecInferOut act_decode_infer(Tape& tape, ActDecParams& params, GruParams& rnn,
                                AttentionParams& att, const AttentionContext& ctx, Value s0,
                                EmbeddingTable& E_trg, int t_max, int char_budget) {
    if (t_max < 1) throw UsageError("act_decode_infer: t_max must be >= 1");
    const int dec_hidden = rnn.hidden_dim;
    const int embed = E_trg.dim();

    ActDecInferOut out;
    Value s = s0;
    Value e = embed_lookup(tape, E_trg, Vocabulary::bos_id);
    bool done = false;

    for (int t = 0; t < t_max && !done; ++t) {
        AttendOut a = attend(tape, att, ctx, s);
        Value s_rnn = gru_step(tape, rnn, s, tape.vstack2(e, a.context)).s;
        Value act_state = tape.add(tape.matmul(tape.param(params.Wp), s_rnn), tape.param(params.bp));
        Value input = e;
        Value s_mean = tape.zeros(dec_hidden, 1);
        Value o_mean = tape.zeros(embed, 1);
        Value H = tape.zeros(1, 1);
        const int span_begin = static_cast<int>(out.ids.size());

        for (int n = 0; n < t_max; ++n) {
            Value act_in = params.feed_attention ? tape.vstack2(input, a.context) : input;
            act_state = gru_step(tape, params.trans, act_state, act_in).s;
            Value o = project_output(tape, params.W_o, params.b_o, act_state);
            const Tensor& logits = tape.data(params.out.logits(tape, o));
            int best = 0;
            for (int i = 1; i < logits.rows; ++i) {
                if (logits.at(i, 0) > logits.at(best, 0)) best = i;
            }
            out.ids.push_back(best);
            auto halt = halting_step(tape, params.halting, act_state, H, false);
            out.probs.push_back(tape.scalar(halt.p));
            Value y_emb = embed_lookup(tape, E_trg, best);
            s_mean = tape.wacc(s_mean, halt.p, act_state);
            o_mean = tape.wacc(o_mean, halt.p, y_emb);
            input = y_emb;
            H = halt.H_next;
            if (static_cast<int>(out.ids.size()) >= char_budget) {
                out.truncated = true;
                done = true;
                break;
            }
            if (best == Vocabulary::eos_id) {
                done = true;
                break;
            }
            if (halt.halted) break;
        }
        out.spans.emplace_back(span_begin, static_cast<int>(out.ids.size()));
        s = s_mean;
        e = o_mean;
    }
    if (!done && std::find(out.ids.begin(), out.ids.end(), Vocabulary::eos_id) == out.ids.end()) {
        out.truncated = true;
    }
    return out;
}

DynamicDepthOut dynamic_depth_reference(Tape& tape, ActEncParams& params, Value x, Value s_prev,
                                        int max_ponder) {
    if (max_ponder < 1) throw UsageError("dynamic_depth_reference: max_ponder must be >= 1");
    const int act_hidden = params.trans.hidden_dim;
    const int embed = params.W_o.value.rows;
    DynamicDepthOut out;
    Value s_mean = tape.zeros(act_hidden, 1);
    Value o_mean = tape.zeros(embed, 1);
    Value H = tape.zeros(1, 1);
    Value s = s_prev;
    for (int n = 0; n < max_ponder; ++n) {
        s = gru_step(tape, params.trans, s, x).s;
        Value o = project_output(tape, params.W_o, params.b_o, s);
        const bool force = (n == max_ponder - 1);
        auto halt = halting_step(tape, params.halting, s, H, force);
        s_mean = tape.wacc(s_mean, halt.p, s);
        o_mean = tape.wacc(o_mean, halt.p, o);
        out.probs.push_back(tape.scalar(halt.p));
        ++out.steps;
        if (halt.halted) {
            out.remainder = tape.one_minus(H);
            break;
        }
        H = halt.H_next;
    }
    out.s_mean = s_mean;
    out.o_mean = o_mean;
    return out;
}

} // namespace actseg
