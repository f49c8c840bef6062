// Shared independent oracles for the unit and acceptance suites. Everything
// here is deliberately built on different machinery than the code under
// test (position scans instead of count maps, explicit enumeration instead
// of search).
#pragma once

#include "infer.hpp"
#include "model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace actseg::testing {

// Brute-force corpus BLEU: clipped n-gram matching by reference scanning.
inline double bleu_oracle(const std::vector<std::string>& hyps,
                          const std::vector<std::string>& refs) {
    auto toks = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ' ') {
                if (!cur.empty()) out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    };
    long hyp_len = 0, ref_len = 0;
    double logsum = 0.0;
    int orders = 0;
    for (int n = 1; n <= 4; ++n) {
        long match = 0, total = 0;
        for (size_t s = 0; s < hyps.size(); ++s) {
            const auto h = toks(hyps[s]);
            const auto r = toks(refs[s]);
            if (n == 1) {
                hyp_len += static_cast<long>(h.size());
                ref_len += static_cast<long>(r.size());
            }
            if (static_cast<int>(h.size()) < n) continue;
            std::vector<bool> used(r.size(), false);
            for (size_t i = 0; i + static_cast<size_t>(n) <= h.size(); ++i) {
                ++total;
                for (size_t j = 0; j + static_cast<size_t>(n) <= r.size(); ++j) {
                    if (used[j]) continue;
                    bool eq = true;
                    for (int k = 0; k < n; ++k) {
                        if (h[i + static_cast<size_t>(k)] != r[j + static_cast<size_t>(k)]) {
                            eq = false;
                            break;
                        }
                    }
                    if (eq) {
                        used[j] = true;
                        ++match;
                        break;
                    }
                }
            }
        }
        if (total == 0) continue;
        ++orders;
        if (match == 0) return 0.0;
        logsum += std::log(static_cast<double>(match) / static_cast<double>(total));
    }
    if (orders == 0 || hyp_len == 0) return 0.0;
    const double bp = hyp_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(logsum / orders);
}

// Exhaustive character n-gram precision/recall for one order (spaces
// removed), used to assemble the chrF oracle.
inline std::pair<double, double> chr_ngram_pr(const std::string& hyp, const std::string& ref,
                                              int n) {
    auto grams = [&](const std::string& s) {
        std::string stripped;
        for (char c : s) {
            if (c != ' ') stripped += c;
        }
        std::vector<std::string> g;
        for (size_t i = 0; i + static_cast<size_t>(n) <= stripped.size(); ++i) {
            g.push_back(stripped.substr(i, static_cast<size_t>(n)));
        }
        return g;
    };
    auto h = grams(hyp);
    auto r = grams(ref);
    long match = 0;
    std::vector<bool> used(r.size(), false);
    for (const auto& g : h) {
        for (size_t j = 0; j < r.size(); ++j) {
            if (!used[j] && r[j] == g) {
                used[j] = true;
                ++match;
                break;
            }
        }
    }
    const double p = h.empty() ? 0.0 : static_cast<double>(match) / static_cast<double>(h.size());
    const double rr = r.empty() ? 0.0 : static_cast<double>(match) / static_cast<double>(r.size());
    return {p, rr};
}

// Hand-rigged distribution tree over {eos, a, b}: the short hypothesis wins
// on raw log-probability, the long pure-'a' one wins under alpha = 1.
class ToyStepper final : public Stepper {
public:
    static constexpr int sym_a = 4;
    static constexpr int sym_b = 5;

    int vocab() const override { return 6; }
    int start() override {
        prefixes_.assign(1, {});
        return 0;
    }

    std::pair<std::vector<double>, int> advance(int state, int prev) override {
        std::vector<int> prefix = prefixes_[static_cast<size_t>(state)];
        if (prev != Vocabulary::bos_id) prefix.push_back(prev);
        prefixes_.push_back(prefix);
        return {log_dist(prefix), static_cast<int>(prefixes_.size() - 1)};
    }

    static std::vector<double> log_dist(const std::vector<int>& prefix) {
        int a_run = 0;
        bool pure_a = true;
        for (int s : prefix) {
            if (s == sym_a) {
                ++a_run;
            } else {
                pure_a = false;
            }
        }
        std::vector<double> p(6, 1e-12);
        if (!pure_a || a_run >= 4) {
            p[Vocabulary::eos_id] = 1.0;
        } else if (a_run == 0) {
            p[Vocabulary::eos_id] = 0.36;
            p[sym_a] = 0.60;
            p[sym_b] = 0.04;
        } else if (a_run < 3) {
            p[sym_a] = 0.90;
            p[Vocabulary::eos_id] = 0.05;
            p[sym_b] = 0.05;
        } else {
            p[Vocabulary::eos_id] = 0.62;
            p[sym_a] = 0.19;
            p[sym_b] = 0.19;
        }
        std::vector<double> lp(6);
        for (size_t i = 0; i < 6; ++i) lp[i] = std::log(p[i]);
        return lp;
    }

private:
    std::vector<std::vector<int>> prefixes_;
};

struct EnumeratedHyp {
    std::vector<int> ids;
    double logp;
};

// Every finished hypothesis of the toy tree up to max_len, by full recursion.
inline void enumerate_toy_hyps(std::vector<int> prefix, double logp, int max_len,
                               std::vector<EnumeratedHyp>& out) {
    const auto lp = ToyStepper::log_dist(prefix);
    for (int sym : {Vocabulary::eos_id, ToyStepper::sym_a, ToyStepper::sym_b}) {
        const double next_logp = logp + lp[static_cast<size_t>(sym)];
        if (sym == Vocabulary::eos_id) {
            out.push_back({prefix, next_logp});
        } else if (static_cast<int>(prefix.size()) + 1 < max_len) {
            auto ext = prefix;
            ext.push_back(sym);
            enumerate_toy_hyps(std::move(ext), next_logp, max_len, out);
        }
    }
}

inline std::vector<int> best_toy_hyp(const std::vector<EnumeratedHyp>& all, double alpha) {
    double best = -1e300;
    std::vector<int> ids;
    for (const auto& h : all) {
        const double score = h.logp / length_penalty(static_cast<int>(h.ids.size()) + 1, alpha);
        if (score > best) {
            best = score;
            ids = h.ids;
        }
    }
    return ids;
}

} // namespace actseg::testing
