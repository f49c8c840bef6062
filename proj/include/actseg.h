/* actseg - adaptive segmentation sequence-to-sequence toolkit, C API.
 *
 * All functions return actseg_status; on failure actseg_last_error() holds a
 * message for the calling thread. Strings returned through char** out
 * parameters are heap-allocated and must be released with
 * actseg_string_free(). Models are opaque handles.
 */
#ifndef ACTSEG_H
#define ACTSEG_H

#include <stdint.h>

#if defined(_WIN32)
#define ACTSEG_API __declspec(dllexport)
#else
#define ACTSEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum actseg_status {
    ACTSEG_OK = 0,
    ACTSEG_ERR_USAGE = 1,   /* bad arguments or configuration */
    ACTSEG_ERR_DATA = 2,    /* missing/malformed files or corpora */
    ACTSEG_ERR_NUMERIC = 3, /* numeric failure */
} actseg_status;

typedef struct actseg_model actseg_model;

ACTSEG_API const char* actseg_version(void);
ACTSEG_API const char* actseg_last_error(void);
ACTSEG_API void actseg_string_free(char* s);

/* Synthetic parallel corpora: task is copy | reverse | digit-to-word. */
ACTSEG_API actseg_status actseg_gen_corpus(const char* task, int size, int len_min, int len_max,
                                           int vocab_size, uint64_t seed, const char* src_path,
                                           const char* trg_path);

ACTSEG_API actseg_status actseg_bpe_learn(const char* corpus_path, int n_merges,
                                          const char* merges_out);

/* Full training run; configuration as parallel key/value arrays (same keys
 * as the config file). Writes checkpoints/logs per the configuration and
 * returns a malloc'd summary line. */
ACTSEG_API actseg_status actseg_train(const char* const* keys, const char* const* values,
                                      int n_entries, char** summary_out);

ACTSEG_API actseg_status actseg_model_open(const char* checkpoint_path, actseg_model** out);
ACTSEG_API void actseg_model_close(actseg_model* model);
/* Family name of an open model; the pointer stays valid until close. */
ACTSEG_API const char* actseg_model_family(const actseg_model* model);

/* beam 1 decodes greedily; ACT decoders reject beam > 1. alpha/beta are the
 * length-normalization parameters. */
ACTSEG_API actseg_status actseg_translate_line(actseg_model* model, const char* line, int beam,
                                               double alpha, double beta, int max_len,
                                               char** out);

/* Pipe-delimited segmentation of one line, e.g. "in| g|ru|pp|en|". */
ACTSEG_API actseg_status actseg_segment_line(actseg_model* model, const char* line, char** out);

ACTSEG_API actseg_status actseg_eval_files(const char* hyp_path, const char* ref_path,
                                           double* bleu_out, double* chrf_out, int* n_out);

/* Segment-length statistics over a text file: human-readable table and
 * machine-readable (length,segment,count) CSV. */
ACTSEG_API actseg_status actseg_stats_file(actseg_model* model, const char* input_path,
                                           char** table_out, char** csv_out);

/* Mean GRU gate activations per position, CSV with symbol headers. */
ACTSEG_API actseg_status actseg_gate_probe_csv(actseg_model* model, const char* line,
                                               char** out);

/* Teacher-forced attention weights, one row per decoder step. */
ACTSEG_API actseg_status actseg_attention_csv(actseg_model* model, const char* src_line,
                                              const char* trg_line, char** out);

/* Central-difference check of the end-to-end training loss for a tiny
 * seeded model of the family; writes the max relative error. */
ACTSEG_API actseg_status actseg_grad_check(const char* family, int dims, uint64_t seed,
                                           double* max_rel_err_out);

#ifdef __cplusplus
}
#endif

#endif /* ACTSEG_H */
