#include "ape/ablation.hpp"

#include <sstream>
#include <stdexcept>

#include "ape/decode.hpp"

namespace ape {

std::vector<std::array<int, 3>> parse_layer_triples(const std::string& text) {
  std::vector<std::array<int, 3>> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::array<int, 3> t{};
    char d1 = 0, d2 = 0;
    std::istringstream ts(item);
    if (!(ts >> t[0] >> d1 >> t[1] >> d2 >> t[2]) || d1 != '-' || d2 != '-')
      throw std::invalid_argument("bad layer triple '" + item + "' (expected e.g. 2-2-2)");
    out.push_back(t);
  }
  if (out.empty()) throw std::invalid_argument("no layer triples in '" + text + "'");
  return out;
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& tcfg,
                                      const MergeTable& table, const TripletCorpus& train_corpus,
                                      const TripletCorpus& dev_corpus,
                                      const std::vector<std::array<int, 3>>& layer_triples) {
  // reject impossible triples before spending any training time
  for (const auto& t : layer_triples) {
    ModelConfig cfg = base;
    cfg.n_src = t[0];
    cfg.n_mt = t[1];
    cfg.n_pe = t[2];
    cfg.validate();
  }
  std::vector<AblationRow> rows;
  for (const auto& t : layer_triples) {
    ModelConfig cfg = base;
    cfg.n_src = t[0];
    cfg.n_mt = t[1];
    cfg.n_pe = t[2];
    TransferenceModel model = init_params(cfg, tcfg.seed);
    train(model, train_corpus, dev_corpus, tcfg, table);

    std::vector<std::string> hyps;
    for (const TripletExample& ex : dev_corpus.encoded)
      hyps.push_back(table.decode(greedy_decode(model, ex.src, ex.mt)));
    AblationRow row;
    row.n_src = t[0];
    row.n_mt = t[1];
    row.n_pe = t[2];
    row.dev_bleu = bleu_corpus_text(hyps, dev_corpus.pe);
    row.dev_ter = 100.0 * corpus_ter_text(hyps, dev_corpus.pe).score();
    row.param_count = count_params(model);
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_table_tsv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "layers\tBLEU\tTER\tparams\n";
  for (const AblationRow& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d-%d-%d\t%.2f\t%.2f\t%zu\n", r.n_src, r.n_mt, r.n_pe,
                  r.dev_bleu, r.dev_ter, r.param_count);
    os << buf;
  }
  return os.str();
}

std::string ablation_table_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s %12s\n", "layers", "BLEU", "TER", "params");
  os << buf;
  for (const AblationRow& r : rows) {
    char triple[32];
    std::snprintf(triple, sizeof triple, "%d-%d-%d", r.n_src, r.n_mt, r.n_pe);
    std::snprintf(buf, sizeof buf, "%-10s %8.2f %8.2f %12zu\n", triple, r.dev_bleu, r.dev_ter,
                  r.param_count);
    os << buf;
  }
  return os.str();
}

}  // namespace ape
