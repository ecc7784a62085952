#pragma once

#include <array>
#include <string>
#include <vector>

#include "ape/train.hpp"

namespace ape {

struct AblationRow {
  int n_src = 0, n_mt = 0, n_pe = 0;
  double dev_bleu = 0.0;
  double dev_ter = 0.0;  // percent
  std::size_t param_count = 0;
};

// "2-2-2,2-2-1,2-1-2" -> triples
std::vector<std::array<int, 3>> parse_layer_triples(const std::string& text);

// Trains one model per layer triple with identical seed and budget, then
// greedy-decodes the dev corpus for BLEU/TER. Triples that zero out a block
// the architecture requires are rejected up front.
std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& tcfg,
                                      const MergeTable& table, const TripletCorpus& train_corpus,
                                      const TripletCorpus& dev_corpus,
                                      const std::vector<std::array<int, 3>>& layer_triples);

std::string ablation_table_tsv(const std::vector<AblationRow>& rows);
std::string ablation_table_text(const std::vector<AblationRow>& rows);

}  // namespace ape
