#include "infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace actseg {

double length_penalty(int len, double alpha) {
    if (alpha < 0.0) throw UsageError("length normalization alpha must be >= 0");
    return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

DecodeResult greedy_decode(Stepper& stepper, int max_len) {
    if (max_len < 1) throw UsageError("greedy_decode: max_len must be >= 1");
    DecodeResult res;
    int state = stepper.start();
    int prev = Vocabulary::bos_id;
    double logp = 0.0;
    for (int t = 0; t < max_len; ++t) {
        auto [lp, next_state] = stepper.advance(state, prev);
        int best = 0;
        for (size_t i = 1; i < lp.size(); ++i) {
            if (lp[i] > lp[static_cast<size_t>(best)]) best = static_cast<int>(i);
        }
        logp += lp[static_cast<size_t>(best)];
        state = next_state;
        prev = best;
        if (best == Vocabulary::eos_id) {
            res.score = logp;
            return res;
        }
        res.ids.push_back(best);
    }
    res.truncated = true;
    res.score = logp;
    return res;
}

namespace {

struct Hyp {
    std::vector<int> ids; // generated symbols, eos not stored
    double logp = 0.0;
    int state = 0;
    int last = Vocabulary::bos_id;
};

} // namespace

DecodeResult beam_search(Stepper& stepper, int beam, const LengthNormConfig& norm, int max_len) {
    if (beam < 1) throw UsageError("beam_search: beam must be >= 1");
    if (max_len < 1) throw UsageError("beam_search: max_len must be >= 1");

    std::vector<Hyp> live(1);
    live[0].state = stepper.start();

    bool have_completed = false;
    DecodeResult best_completed;
    double best_completed_score = -std::numeric_limits<double>::infinity();

    for (int t = 0; t < max_len; ++t) {
        std::vector<Hyp> candidates;
        for (const Hyp& h : live) {
            auto [lp, next_state] = stepper.advance(h.state, h.last);
            for (size_t sym = 0; sym < lp.size(); ++sym) {
                Hyp c = h;
                c.logp += lp[sym];
                c.state = next_state;
                c.last = static_cast<int>(sym);
                if (static_cast<int>(sym) != Vocabulary::eos_id) {
                    c.ids.push_back(static_cast<int>(sym));
                }
                candidates.push_back(std::move(c));
            }
        }
        // raw log-probability ranking; ties prefer the lower symbol id so
        // beam = 1 reproduces greedy exactly
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hyp& a, const Hyp& b) { return a.logp > b.logp; });
        if (static_cast<int>(candidates.size()) > beam) {
            candidates.resize(static_cast<size_t>(beam));
        }

        // finished candidates in the top beam move to the completed pool;
        // the survivors refill the beam
        live.clear();
        for (Hyp& c : candidates) {
            if (c.last == Vocabulary::eos_id) {
                // hypothesis length includes the eos step
                const double score =
                    c.logp / length_penalty(static_cast<int>(c.ids.size()) + 1, norm.alpha);
                if (!have_completed || score > best_completed_score) {
                    have_completed = true;
                    best_completed_score = score;
                    best_completed.ids = c.ids;
                    best_completed.score = score;
                }
            } else {
                live.push_back(std::move(c));
            }
        }
        if (live.empty()) break;
        // optimistic bound: extensions only lower logp, lp only grows
        const double bound = live[0].logp / length_penalty(max_len + 1, norm.alpha);
        if (have_completed && best_completed_score >= bound) break;
    }

    if (have_completed) return best_completed;

    DecodeResult res;
    if (!live.empty()) {
        const Hyp& h = live[0];
        res.ids = h.ids;
        res.score = h.logp / length_penalty(static_cast<int>(h.ids.size()), norm.alpha);
    }
    res.truncated = true;
    return res;
}

std::vector<int> translate_ids(Tape& tape, Model& m, std::span<const int> src_ids, int beam,
                               const LengthNormConfig& norm, int max_len) {
    SourceEncoding enc = encode_source(tape, m, src_ids);
    if (family_uses_act_dec(m.family)) {
        if (beam > 1) {
            throw UsageError("beam search is not available for the ACT decoder; use beam 1");
        }
        AttentionContext ctx = attention_context(tape, m.att, enc.annotations, nullptr);
        auto out = act_decode_infer(tape, m.act_dec, m.dec_rnn, m.att, ctx, enc.dec_init,
                                    m.E_trg, m.t_max, m.char_budget);
        std::vector<int> ids;
        for (int id : out.ids) {
            if (id == Vocabulary::eos_id) break;
            ids.push_back(id);
        }
        return ids;
    }
    auto stepper = make_stepper(tape, m, enc);
    DecodeResult res = beam == 1 ? greedy_decode(*stepper, max_len)
                                 : beam_search(*stepper, beam, norm, max_len);
    return res.ids;
}

std::string translate_line(Model& m, const std::string& line, int beam,
                           const LengthNormConfig& norm, int max_len) {
    Tape tape;
    const std::vector<int> src = tokenize_source(m, line);
    if (src.empty()) return "";
    return detokenize_target(m, translate_ids(tape, m, src, beam, norm, max_len));
}

} // namespace actseg
