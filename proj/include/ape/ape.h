#ifndef APE_APE_H
#define APE_APE_H

/* C API for the automatic post-editing toolkit. The core lives in a shared
 * library behind these functions; callers hold opaque handles and check
 * status codes. Failed calls leave a message in ape_last_error() (per
 * thread). All paths are plain filesystem paths. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ape_status {
  APE_OK = 0,
  APE_ERR_INVALID_ARGUMENT = 1,
  APE_ERR_RUNTIME = 2
} ape_status;

const char* ape_status_name(ape_status status);
/* Message from the most recent failing call on this thread. */
const char* ape_last_error(void);

/* ---- configuration ----------------------------------------------------- */

typedef struct ape_config ape_config;

ape_config* ape_config_new(void);
void ape_config_free(ape_config* cfg);
ape_status ape_config_load_file(ape_config* cfg, const char* path);
ape_status ape_config_set(ape_config* cfg, const char* key, const char* value);
/* Effective value (default when unset), NUL-terminated into buf. */
ape_status ape_config_get(const ape_config* cfg, const char* key, char* buf, size_t buf_len);

/* ---- pipeline operations ------------------------------------------------ */

/* Synthetic triplet corpus: n lines into the three files. */
ape_status ape_gen_data(const ape_config* cfg, int n, const char* src_path, const char* mt_path,
                        const char* pe_path);

/* Joint BPE over all three sides; merge table written as text. */
ape_status ape_learn_bpe(const ape_config* cfg, const char* src_path, const char* mt_path,
                         const char* pe_path, const char* table_path);

/* Trains (or fine-tunes, when init_ckpt_path is non-NULL) on the given
 * corpus; checkpoints written per eval interval into checkpoint_dir, the
 * metric log as TSV into log_path (NULL to skip). */
ape_status ape_train(const ape_config* cfg, const char* bpe_path, const char* train_src,
                     const char* train_mt, const char* train_pe, const char* dev_src,
                     const char* dev_mt, const char* dev_pe, const char* init_ckpt_path,
                     const char* checkpoint_dir, const char* log_path);

/* Element-wise mean of the listed checkpoints (identical configs only). */
ape_status ape_average_checkpoints(const char* const* ckpt_paths, size_t n_ckpts,
                                   const char* out_path);

/* ---- decoding ------------------------------------------------------------ */

/* A tokenizer plus one or more loaded checkpoints; several checkpoints form
 * an ensemble whose per-step distributions are averaged. */
typedef struct ape_model ape_model;

ape_model* ape_model_open(const char* bpe_path, const char* const* ckpt_paths, size_t n_models);
void ape_model_close(ape_model* model);

/* *out receives a heap string owned by the caller; release with
 * ape_string_free. max_len <= 0 defaults to mt length + 50. */
ape_status ape_decode_sentence(const ape_model* model, const char* src, const char* mt, int beam,
                               double length_penalty, int max_len, char** out);
ape_status ape_decode_corpus(const ape_model* model, const char* src_path, const char* mt_path,
                             int beam, double length_penalty, int max_len, const char* hyp_path);
void ape_string_free(char* s);

/* ---- evaluation ----------------------------------------------------------- */

/* Corpus BLEU and TER of hyp against ref; any output pointer may be NULL. */
ape_status ape_evaluate_files(const char* hyp_path, const char* ref_path, int lowercase,
                              double* bleu, double* ter, long* insertions, long* deletions,
                              long* substitutions, long* shifts);

/* Per-operation error reduction of hyp vs the raw-MT baseline, both against
 * pe; written as TSV and as an aligned text table (either path may be NULL). */
ape_status ape_edit_report(const char* mt_path, const char* pe_path, const char* hyp_path,
                           const char* system_name, const char* tsv_path, const char* text_path);

/* ---- ablation ------------------------------------------------------------- */

/* Trains one model per layer triple ("2-2-2,2-2-1,2-1-2"), writes the
 * comparison table as TSV. */
ape_status ape_ablate(const ape_config* cfg, const char* bpe_path, const char* train_src,
                      const char* train_mt, const char* train_pe, const char* dev_src,
                      const char* dev_mt, const char* dev_pe, const char* triples,
                      const char* tsv_path);

#ifdef __cplusplus
}
#endif

#endif /* APE_APE_H */
