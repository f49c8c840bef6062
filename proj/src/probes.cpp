#include "probes.hpp"

#include "stats.hpp"

#include <cstdio>

namespace actseg {

namespace {

std::string matrix_csv(const std::string& corner, const std::vector<std::string>& cols,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::vector<double>>& rows) {
    std::string out = csv_quote(corner);
    for (const auto& c : cols) {
        out += ',';
        out += csv_quote(c);
    }
    out += '\n';
    char buf[32];
    for (size_t r = 0; r < rows.size(); ++r) {
        out += csv_quote(row_labels[r]);
        for (double x : rows[r]) {
            std::snprintf(buf, sizeof buf, "%.6f", x);
            out += ',';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::vector<std::string> probe_columns(Model& m, const std::string& line,
                                       const SourceEncoding& enc) {
    if (family_uses_act_enc(m.family)) return extract_segments(enc.trace, line);
    return source_symbols(m, line);
}

} // namespace

std::string ProbeMatrix::to_csv() const {
    return matrix_csv("gate", col_symbols, row_labels, rows);
}

ProbeMatrix gate_probe(Model& m, const std::string& line) {
    Tape tape;
    const std::vector<int> src = tokenize_source(m, line);
    if (src.empty()) throw DataError("gate_probe: empty sentence");
    GateRecord gates;
    SourceEncoding enc = encode_source(tape, m, src, &gates);

    ProbeMatrix out;
    out.col_symbols = probe_columns(m, line, enc);
    for (size_t l = 0; l < gates.fwd_reset.size(); ++l) {
        const std::string prefix = "l" + std::to_string(l) + ".";
        out.row_labels.push_back(prefix + "fwd.reset");
        out.rows.push_back(gates.fwd_reset[l]);
        out.row_labels.push_back(prefix + "fwd.update");
        out.rows.push_back(gates.fwd_update[l]);
        out.row_labels.push_back(prefix + "bwd.reset");
        out.rows.push_back(gates.bwd_reset[l]);
        out.row_labels.push_back(prefix + "bwd.update");
        out.rows.push_back(gates.bwd_update[l]);
    }
    return out;
}

std::string AttentionMatrix::to_csv() const {
    return matrix_csv("target\\source", col_symbols, row_labels, rows);
}

AttentionMatrix attention_export(Model& m, const std::string& src_line,
                                 const std::string& trg_line) {
    Tape tape;
    const std::vector<int> src = tokenize_source(m, src_line);
    const std::vector<int> trg = tokenize_target(m, trg_line);
    if (src.empty()) throw DataError("attention_export: empty source");

    AttentionMatrix out;
    if (family_uses_act_dec(m.family)) {
        SourceEncoding enc = encode_source(tape, m, src);
        AttentionContext ctx = attention_context(tape, m.att, enc.annotations, nullptr);
        auto dec = act_decode_train(tape, m.act_dec, m.dec_rnn, m.att, ctx, enc.dec_init,
                                    m.E_trg, trg);
        out.rows = std::move(dec.att_rows);
        for (auto [begin, end] : dec.spans) {
            std::string label;
            for (int i = begin; i < end; ++i) {
                label += trg[static_cast<size_t>(i)] == Vocabulary::eos_id
                             ? "</s>"
                             : m.trg_vocab.symbol(trg[static_cast<size_t>(i)]);
            }
            out.row_labels.push_back(label);
        }
        out.col_symbols = probe_columns(m, src_line, enc);
        return out;
    }

    std::vector<std::vector<double>> att_rows;
    SourceEncoding enc = encode_source(tape, m, src);
    // teacher-forced pass through the standard decoder path
    {
        Tape fresh;
        pair_loss(fresh, m, src, trg, &att_rows);
    }
    out.rows = std::move(att_rows);
    for (int id : trg) {
        out.row_labels.push_back(id == Vocabulary::eos_id ? "</s>" : m.trg_vocab.symbol(id));
    }
    out.col_symbols = probe_columns(m, src_line, enc);
    return out;
}

} // namespace actseg
