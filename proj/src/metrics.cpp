#include "metrics.hpp"

#include "utf8.hpp"
#include "vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace actseg {

namespace {

void check_counts(size_t h, size_t r) {
    if (h != r) {
        throw DataError("hypothesis/reference count mismatch: " + std::to_string(h) + " vs " +
                        std::to_string(r));
    }
    if (h == 0) throw DataError("empty corpus");
}

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const std::vector<std::string>& toks, int n) {
    NgramCounts c;
    if (static_cast<int>(toks.size()) < n) return c;
    for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i) {
        c[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                   toks.begin() + static_cast<long>(i) + n)] += 1;
    }
    return c;
}

} // namespace

std::string MetricReport::to_line() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "BLEU=%.2f chrF=%.4f n=%d", bleu, chrf, sentences);
    return buf;
}

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references) {
    check_counts(hypotheses.size(), references.size());
    long hyp_len = 0, ref_len = 0;
    long match[4] = {0, 0, 0, 0};
    long total[4] = {0, 0, 0, 0};
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const auto h = split_whitespace(hypotheses[i]);
        const auto r = split_whitespace(references[i]);
        hyp_len += static_cast<long>(h.size());
        ref_len += static_cast<long>(r.size());
        for (int n = 1; n <= 4; ++n) {
            const auto hc = count_ngrams(h, n);
            const auto rc = count_ngrams(r, n);
            for (const auto& [gram, cnt] : hc) {
                total[n - 1] += cnt;
                auto it = rc.find(gram);
                if (it != rc.end()) match[n - 1] += std::min(cnt, it->second); // clipped
            }
        }
    }
    double log_prec_sum = 0.0;
    int orders = 0;
    for (int n = 0; n < 4; ++n) {
        if (total[n] == 0) continue; // no candidate n-grams of this order anywhere
        ++orders;
        if (match[n] == 0) return 0.0;
        log_prec_sum += std::log(static_cast<double>(match[n]) / static_cast<double>(total[n]));
    }
    if (orders == 0 || hyp_len == 0) return 0.0;
    const double bp =
        hyp_len >= ref_len ? 1.0
                           : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * std::exp(log_prec_sum / static_cast<double>(orders));
}

double chrf(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int max_order, double beta) {
    check_counts(hypotheses.size(), references.size());
    if (max_order < 1) throw UsageError("chrf: order must be >= 1");

    auto strip_chars = [](const std::string& s) {
        std::vector<std::string> cs;
        for (auto& c : utf8_split(s)) {
            if (c != " " && c != "\t") cs.push_back(c);
        }
        return cs;
    };

    double prec_sum = 0.0, rec_sum = 0.0;
    for (int n = 1; n <= max_order; ++n) {
        long match = 0, hyp_total = 0, ref_total = 0;
        for (size_t i = 0; i < hypotheses.size(); ++i) {
            const auto hc = count_ngrams(strip_chars(hypotheses[i]), n);
            const auto rc = count_ngrams(strip_chars(references[i]), n);
            for (const auto& [g, c] : hc) hyp_total += c;
            for (const auto& [g, c] : rc) ref_total += c;
            for (const auto& [g, c] : hc) {
                auto it = rc.find(g);
                if (it != rc.end()) match += std::min(c, it->second);
            }
        }
        // A vacuously empty order on both sides counts as a perfect match,
        // keeping chrf(h, h) = 1 on degenerate corpora.
        prec_sum += hyp_total == 0 ? (ref_total == 0 ? 1.0 : 0.0)
                                   : static_cast<double>(match) / static_cast<double>(hyp_total);
        rec_sum += ref_total == 0 ? (hyp_total == 0 ? 1.0 : 0.0)
                                  : static_cast<double>(match) / static_cast<double>(ref_total);
    }
    const double P = prec_sum / max_order;
    const double R = rec_sum / max_order;
    if (P == 0.0 && R == 0.0) return 0.0;
    const double b2 = beta * beta;
    return (1.0 + b2) * P * R / (b2 * P + R);
}

MetricReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                             const std::vector<std::string>& references) {
    MetricReport r;
    r.bleu = bleu(hypotheses, references);
    r.chrf = chrf(hypotheses, references);
    r.sentences = static_cast<int>(hypotheses.size());
    return r;
}

} // namespace actseg
