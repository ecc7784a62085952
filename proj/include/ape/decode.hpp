#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ape/corpus.hpp"
#include "ape/metrics.hpp"
#include "ape/model.hpp"

namespace ape {

struct BeamHypothesis {
  std::vector<int> ids;  // generated tokens, BOS/EOS excluded
  double log_prob = 0.0;
  bool finished = false;
};

// Next-token log probabilities given the generated prefix. The beam and
// greedy cores are written against this so rigged scorers can drive them in
// tests; model and ensemble scorers are built below.
using StepScorer = std::function<std::vector<Real>(const std::vector<int>& prefix)>;

std::vector<int> greedy_core(const StepScorer& scorer, int max_new);
std::vector<int> beam_core(const StepScorer& scorer, int vocab, int beam_size, int max_new,
                           double length_penalty);

// Per-step distributions of several models combined in probability space
// (log-space averaging behind the flag). Encoder memories are computed once.
StepScorer make_ensemble_scorer(const std::vector<const TransferenceModel*>& models,
                                const std::vector<int>& src, const std::vector<int>& mt,
                                bool log_space = false);

std::vector<int> greedy_decode(const TransferenceModel& model, const std::vector<int>& src,
                               const std::vector<int>& mt, int max_len = -1);

// max_len < 0 defaults to mt length + 50 (capped by the model's max_len).
std::vector<int> beam_search(const std::vector<const TransferenceModel*>& models,
                             const std::vector<int>& src, const std::vector<int>& mt,
                             int beam_size = 4, int max_len = -1, double length_penalty = 0.6,
                             bool log_space = false);

struct CorpusDecodeResult {
  std::vector<std::string> hyps;  // detokenized, order matching the corpus
  double bleu = 0.0;
  TerBreakdown ter;
};

// Beam-decodes every triplet, writes one hypothesis line per input when
// out_path is non-empty, and scores against the corpus pe references.
CorpusDecodeResult decode_corpus(const std::vector<const TransferenceModel*>& models,
                                 const TripletCorpus& corpus, const MergeTable& table,
                                 int beam_size = 4, double length_penalty = 0.6, int max_len = -1,
                                 const std::string& out_path = "");

}  // namespace ape
