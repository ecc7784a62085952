#include "ape/ape.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "ape/ablation.hpp"
#include "ape/config.hpp"
#include "ape/decode.hpp"
#include "ape/train.hpp"

using namespace ape;

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ape_status guarded(Fn&& fn) {
  try {
    fn();
    return APE_OK;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return APE_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return APE_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("null argument: ") + what);
}

TripletCorpus load_encoded(const MergeTable& table, const char* src, const char* mt,
                           const char* pe) {
  TripletCorpus c = load_corpus(src, mt, pe);
  c.encode_with(table);
  return c;
}

}  // namespace

struct ape_config {
  Config cfg;
};

struct ape_model {
  MergeTable table;
  std::vector<TransferenceModel> models;

  explicit ape_model(MergeTable t) : table(std::move(t)) {}
  std::vector<const TransferenceModel*> pointers() const {
    std::vector<const TransferenceModel*> out;
    for (const auto& m : models) out.push_back(&m);
    return out;
  }
};

extern "C" {

const char* ape_status_name(ape_status status) {
  switch (status) {
    case APE_OK: return "ok";
    case APE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case APE_ERR_RUNTIME: return "runtime error";
  }
  return "unknown";
}

const char* ape_last_error(void) { return g_last_error.c_str(); }

ape_config* ape_config_new(void) { return new ape_config(); }

void ape_config_free(ape_config* cfg) { delete cfg; }

ape_status ape_config_load_file(ape_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg && path, "config/path");
    cfg->cfg.load_file(resolve_config_path(path));
  });
}

ape_status ape_config_set(ape_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg && key && value, "config/key/value");
    cfg->cfg.set(key, value);
  });
}

ape_status ape_config_get(const ape_config* cfg, const char* key, char* buf, size_t buf_len) {
  return guarded([&] {
    require(cfg && key && buf, "config/key/buffer");
    const std::string v = cfg->cfg.get(key);
    if (v.size() + 1 > buf_len)
      throw std::invalid_argument("buffer too small for value of '" + std::string(key) + "'");
    std::memcpy(buf, v.c_str(), v.size() + 1);
  });
}

ape_status ape_gen_data(const ape_config* cfg, int n, const char* src_path, const char* mt_path,
                        const char* pe_path) {
  return guarded([&] {
    require(cfg && src_path && mt_path && pe_path, "config/paths");
    TripletCorpus c = gen_synthetic(cfg->cfg.synth_spec(), n);
    save_corpus(c, src_path, mt_path, pe_path);
  });
}

ape_status ape_learn_bpe(const ape_config* cfg, const char* src_path, const char* mt_path,
                         const char* pe_path, const char* table_path) {
  return guarded([&] {
    require(cfg && src_path && mt_path && pe_path && table_path, "config/paths");
    TripletCorpus c = load_corpus(src_path, mt_path, pe_path);
    MergeTable t =
        MergeTable::learn(c.all_sentences(), static_cast<int>(cfg->cfg.get_int("bpe_merges")));
    t.save(table_path);
  });
}

ape_status ape_train(const ape_config* cfg, const char* bpe_path, const char* train_src,
                     const char* train_mt, const char* train_pe, const char* dev_src,
                     const char* dev_mt, const char* dev_pe, const char* init_ckpt_path,
                     const char* checkpoint_dir, const char* log_path) {
  return guarded([&] {
    require(cfg && bpe_path && train_src && train_mt && train_pe && dev_src && dev_mt && dev_pe &&
                checkpoint_dir,
            "config/paths");
    const MergeTable table = MergeTable::load(bpe_path);
    const TripletCorpus train_corpus = load_encoded(table, train_src, train_mt, train_pe);
    const TripletCorpus dev_corpus = load_encoded(table, dev_src, dev_mt, dev_pe);
    const ModelConfig mcfg = cfg->cfg.model_config(table.vocab_size());
    const TrainConfig tcfg = cfg->cfg.train_config();
    TransferenceModel model = init_params(mcfg, tcfg.seed);

    std::ofstream log;
    std::ostream* log_stream = nullptr;
    if (log_path) {
      log.open(log_path);
      if (!log) throw std::runtime_error(std::string("cannot write metric log to ") + log_path);
      log_stream = &log;
    }
    if (init_ckpt_path) {
      const Checkpoint init = load_checkpoint(init_ckpt_path);
      fine_tune(model, init, train_corpus, dev_corpus, tcfg, table, checkpoint_dir, log_stream);
    } else {
      train(model, train_corpus, dev_corpus, tcfg, table, checkpoint_dir, log_stream);
    }
  });
}

ape_status ape_average_checkpoints(const char* const* ckpt_paths, size_t n_ckpts,
                                   const char* out_path) {
  return guarded([&] {
    require(ckpt_paths && out_path, "paths");
    if (n_ckpts == 0) throw std::invalid_argument("no checkpoints to average");
    std::vector<Checkpoint> ckpts;
    for (size_t i = 0; i < n_ckpts; ++i) {
      require(ckpt_paths[i], "checkpoint path");
      ckpts.push_back(load_checkpoint(ckpt_paths[i]));
    }
    save_checkpoint(average_checkpoints(ckpts), out_path);
  });
}

ape_model* ape_model_open(const char* bpe_path, const char* const* ckpt_paths, size_t n_models) {
  std::unique_ptr<ape_model> handle;
  const ape_status st = guarded([&] {
    require(bpe_path && ckpt_paths, "paths");
    if (n_models == 0) throw std::invalid_argument("no checkpoints given");
    handle = std::make_unique<ape_model>(MergeTable::load(bpe_path));
    for (size_t i = 0; i < n_models; ++i) {
      require(ckpt_paths[i], "checkpoint path");
      handle->models.push_back(model_from_checkpoint(load_checkpoint(ckpt_paths[i])));
      if (handle->models.back().config.vocab_size != handle->table.vocab_size())
        throw std::invalid_argument(std::string("checkpoint ") + ckpt_paths[i] +
                                    " was trained with a different vocabulary");
    }
  });
  return st == APE_OK ? handle.release() : nullptr;
}

void ape_model_close(ape_model* model) { delete model; }

ape_status ape_decode_sentence(const ape_model* model, const char* src, const char* mt, int beam,
                               double length_penalty, int max_len, char** out) {
  return guarded([&] {
    require(model && src && mt && out, "model/sentences/out");
    const std::vector<int> ids =
        beam_search(model->pointers(), model->table.encode(src), model->table.encode(mt), beam,
                    max_len <= 0 ? -1 : max_len, length_penalty);
    const std::string text = model->table.decode(ids);
    *out = static_cast<char*>(std::malloc(text.size() + 1));
    if (!*out) throw std::runtime_error("out of memory");
    std::memcpy(*out, text.c_str(), text.size() + 1);
  });
}

ape_status ape_decode_corpus(const ape_model* model, const char* src_path, const char* mt_path,
                             int beam, double length_penalty, int max_len, const char* hyp_path) {
  return guarded([&] {
    require(model && src_path && mt_path && hyp_path, "model/paths");
    const std::vector<std::string> src = read_text_lines(src_path);
    const std::vector<std::string> mt = read_text_lines(mt_path);
    if (src.size() != mt.size())
      throw std::runtime_error("corpus line counts differ: " + std::string(src_path) + " has " +
                               std::to_string(src.size()) + ", " + mt_path + " has " +
                               std::to_string(mt.size()));
    std::ofstream f(hyp_path, std::ios::binary);
    if (!f) throw std::runtime_error(std::string("cannot write hypotheses to ") + hyp_path);
    const auto models = model->pointers();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const std::vector<int> ids =
          beam_search(models, model->table.encode(src[i]), model->table.encode(mt[i]), beam,
                      max_len <= 0 ? -1 : max_len, length_penalty);
      f << model->table.decode(ids) << '\n';
    }
  });
}

void ape_string_free(char* s) { std::free(s); }

ape_status ape_evaluate_files(const char* hyp_path, const char* ref_path, int lowercase,
                              double* bleu, double* ter, long* insertions, long* deletions,
                              long* substitutions, long* shifts) {
  return guarded([&] {
    require(hyp_path && ref_path, "paths");
    std::vector<Tokens> hyps, refs;
    for (const auto& s : read_text_lines(hyp_path)) {
      Tokens t = tokenize_whitespace(s);
      hyps.push_back(lowercase ? lowercase_tokens(std::move(t)) : std::move(t));
    }
    for (const auto& s : read_text_lines(ref_path)) {
      Tokens t = tокenize_whitespace(s);
      refs.push_back(lowercase ? lowercase_tokens(std::move(t)) : std::move(t));
    }
    if (bleu) *bleu = bleu_corpus(hyps, refs);
    const TerBreakdown b = corpus_ter(hyps, refs);
    if (ter) *ter = b.score();
    if (insertions) *insertions = b.insertions;
    if (deletions) *deletions = b.deletions;
    if (substitutions) *substitutions = b.substitutions;
    if (shifts) *shifts = b.shifts;
  });
}

ape_status ape_edit_report(const char* mt_path, const char* pe_path, const char* hyp_path,
                           const char* system_name, const char* tsv_path, const char* text_path) {
  return guarded([&] {
    require(mt_path && pe_path && hyp_path, "paths");
    const EditReduction r = edit_reduction_report(
        read_text_lines(mt_path), read_text_lines(pe_path), read_text_lines(hyp_path));
    const std::string name = system_name ? system_name : "ape";
    auto write = [](const char* path, const std::string& text) {
      if (!path) return;
      std::ofstream f(path, std::ios::binary);
      if (!f) throw std::runtime_error(std::string("cannot write report to ") + path);
      f << text;
    };
    write(tsv_path, edit_report_tsv(r, name));
    write(text_path, edit_report_text(r, name));
  });
}

ape_status ape_ablate(const ape_config* cfg, const char* bpe_path, const char* train_src,
                      const char* train_mt, const char* train_pe, const char* dev_src,
                      const char* dev_mt, const char* dev_pe, const char* triples,
                      const char* tsv_path) {
  return guarded([&] {
    require(cfg && bpe_path && train_src && train_mt && train_pe && dev_src && dev_mt && dev_pe &&
                triples && tsv_path,
            "config/paths");
    const MergeTable table = MergeTable::load(bpe_path);
    const TripletCorpus train_corpus = load_encoded(table, train_src, train_mt, train_pe);
    const TripletCorpus dev_corpus = load_encoded(table, dev_src, dev_mt, dev_pe);
    const std::vector<AblationRow> rows =
        run_ablation(cfg->cfg.model_config(table.vocab_size()), cfg->cfg.train_config(), table,
                     train_corpus, dev_corpus, parse_layer_triples(triples));
    std::ofstream f(tsv_path, std::ios::binary);
    if (!f) throw std::runtime_error(std::string("cannot write ablation table to ") + tsv_path);
    f << ablation_table_tsv(rows);
  });
}

}  // extern "C"
