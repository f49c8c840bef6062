#pragma once

#include "model.hpp"

#include <string>
#include <vector>

namespace actseg {

// Mean gate activations per encoder position: one row per
// (layer, direction, gate), one column per position, entries in [0, 1].
struct ProbeMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_symbols;
    std::vector<std::vector<double>> rows;

    std::string to_csv() const;
};

// Runs the encoder on one sentence and averages each gate vector over
// hidden units. For ACT families the columns are the learned segments.
ProbeMatrix gate_probe(Model& m, const std::string& line);

// Teacher-forced attention weights: rows = decoder steps, columns = source
// positions; every row sums to 1.
struct AttentionMatrix {
    std::vector<std::string> row_labels; // target symbol per step
    std::vector<std::string> col_symbols;
    std::vector<std::vector<double>> rows;

    std::string to_csv() const;
};

AttentionMatrix attention_export(Model& m, const std::string& src_line,
                                 const std::string& trg_line);

} // namespace actseg
