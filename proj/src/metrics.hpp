#pragma once

#include "errors.hpp"

#include <string>
#include <vector>

namespace actseg {

struct MetricReport {
    double bleu = 0.0; // percentage, 4-gram corpus BLEU with brevity penalty
    double chrf = 0.0; // character n-gram F-score in [0, 1]
    int sentences = 0;

    // "BLEU=<x.xx> chrF=<0.xxxx> n=<count>"
    std::string to_line() const;
};

// Corpus BLEU: geometric mean of modified 1..4-gram precisions times the
// brevity penalty, over whitespace tokens. Orders with no candidate n-grams
// anywhere in the corpus (all hypotheses shorter than n) are skipped, so
// bleu(h, h) is 100 for any corpus.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references);

// chrF on character n-grams up to max_order (default bigrams), beta = 2.
// Spaces are removed before n-gram extraction. Precision/recall are
// micro-averaged over the corpus per order, then averaged across orders.
double chrf(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int max_order = 2, double beta = 2.0);

MetricReport evaluate_corpus(const std::vector<std::string>& hypotheses,
                             const std::vector<std::string>& references);

} // namespace actseg
