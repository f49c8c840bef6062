#include "actseg.h"

#include "checkpoint.hpp"
#include "commands.hpp"
#include "infer.hpp"
#include "probes.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

using namespace actseg;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename F>
actseg_status guarded(F&& f) {
    try {
        f();
        return ACTSEG_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        switch (e.kind()) {
            case ErrorKind::usage: return ACTSEG_ERR_USAGE;
            case ErrorKind::data: return ACTSEG_ERR_DATA;
            case ErrorKind::numeric: return ACTSEG_ERR_NUMERIC;
        }
        return ACTSEG_ERR_NUMERIC;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return ACTSEG_ERR_NUMERIC;
    }
}

actseg_status require(bool cond, const char* msg) {
    if (cond) return ACTSEG_OK;
    g_last_error = msg;
    return ACTSEG_ERR_USAGE;
}

} // namespace

// Opaque handle: owns the model plus its cached family string.
struct actseg_model {
    std::unique_ptr<Model> model;
    std::string family;
};

extern "C" {

const char* actseg_version(void) { return "actseg 1.0.0"; }

const char* actseg_last_error(void) { return g_last_error.c_str(); }

void actseg_string_free(char* s) { std::free(s); }

actseg_status actseg_gen_corpus(const char* task, int size, int len_min, int len_max,
                                int vocab_size, uint64_t seed, const char* src_path,
                                const char* trg_path) {
    if (auto st = require(task && src_path && trg_path, "null argument"); st != ACTSEG_OK)
        return st;
    return guarded([&] {
        cmd_gen_corpus(task, size, len_min, len_max, vocab_size, seed, src_path, trg_path);
    });
}

actseg_status actseg_bpe_learn(const char* corpus_path, int n_merges, const char* merges_out) {
    if (auto st = require(corpus_path && merges_out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] { cmd_bpe_learn(corpus_path, n_merges, merges_out); });
}

actseg_status actseg_train(const char* const* keys, const char* const* values, int n_entries,
                           char** summary_out) {
    if (auto st = require(n_entries == 0 || (keys && values), "null configuration");
        st != ACTSEG_OK)
        return st;
    return guarded([&] {
        KeyValueConfig cfg;
        for (int i = 0; i < n_entries; ++i) {
            if (!keys[i] || !values[i]) throw UsageError("null configuration entry");
            // reserved key: load a key=value file at this position, so later
            // entries override its contents
            if (std::string_view(keys[i]) == "config") {
                cfg.load_file(values[i]);
            } else {
                cfg.set(keys[i], values[i]);
            }
        }
        const std::string summary = cmd_train(cfg);
        if (summary_out) *summary_out = dup_string(summary);
    });
}

actseg_status actseg_model_open(const char* checkpoint_path, actseg_model** out) {
    if (auto st = require(checkpoint_path && out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] {
        auto handle = new actseg_model;
        try {
            handle->model = load_checkpoint(checkpoint_path);
            handle->family = family_to_string(handle->model->family);
        } catch (...) {
            delete handle;
            throw;
        }
        *out = handle;
    });
}

void actseg_model_close(actseg_model* model) { delete model; }

const char* actseg_model_family(const actseg_model* model) {
    return model ? model->family.c_str() : "";
}

actseg_status actseg_translate_line(actseg_model* model, const char* line, int beam,
                                    double alpha, double beta, int max_len, char** out) {
    if (auto st = require(model && line && out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] {
        LengthNormConfig norm{alpha, beta};
        *out = dup_string(translate_line(*model->model, line, beam, norm, max_len));
    });
}

actseg_status actseg_segment_line(actseg_model* model, const char* line, char** out) {
    if (auto st = require(model && line && out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] { *out = dup_string(segment_line(*model->model, line)); });
}

actseg_status actseg_eval_files(const char* hyp_path, const char* ref_path, double* bleu_out,
                                double* chrf_out, int* n_out) {
    if (auto st = require(hyp_path && ref_path, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] {
        MetricReport r = cmd_eval(hyp_path, ref_path);
        if (bleu_out) *bleu_out = r.bleu;
        if (chrf_out) *chrf_out = r.chrf;
        if (n_out) *n_out = r.sentences;
    });
}

actseg_status actseg_stats_file(actseg_model* model, const char* input_path, char** table_out,
                                char** csv_out) {
    if (auto st = require(model && input_path, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] {
        StatsOutput s = cmd_stats(*model->model, input_path);
        if (table_out) *table_out = dup_string(s.table);
        if (csv_out) *csv_out = dup_string(s.csv);
    });
}

actseg_status actseg_gate_probe_csv(actseg_model* model, const char* line, char** out) {
    if (auto st = require(model && line && out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] { *out = dup_string(gate_probe(*model->model, line).to_csv()); });
}

actseg_status actseg_attention_csv(actseg_model* model, const char* src_line,
                                   const char* trg_line, char** out) {
    if (auto st = require(model && src_line && trg_line && out, "null argument");
        st != ACTSEG_OK)
        return st;
    return guarded([&] {
        *out = dup_string(attention_export(*model->model, src_line, trg_line).to_csv());
    });
}

actseg_status actseg_grad_check(const char* family, int dims, uint64_t seed,
                                double* max_rel_err_out) {
    if (auto st = require(family && max_rel_err_out, "null argument"); st != ACTSEG_OK) return st;
    return guarded([&] { *max_rel_err_out = cmd_gradcheck(family, dims, seed); });
}

} // extern "C"
