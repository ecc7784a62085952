#include "ape/decode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ape {

namespace {

double normalized_score(const BeamHypothesis& h, double alpha) {
  // length includes the EOS that finished the hypothesis
  const double len = static_cast<double>(h.ids.size()) + (h.finished ? 1.0 : 0.0);
  return h.log_prob / std::pow(std::max(1.0, len), alpha);
}

}  // namespace

std::vector<int> greedy_core(const StepScorer& scorer, int max_new) {
  std::vector<int> ids;
  for (int step = 0; step < max_new; ++step) {
    const std::vector<Real> lp = scorer(ids);
    int best = 0;
    for (int v = 1; v < static_cast<int>(lp.size()); ++v)
      if (lp[static_cast<std::size_t>(v)] > lp[static_cast<std::size_t>(best)]) best = v;
    if (best == kEosId) break;
    ids.push_back(best);
  }
  return ids;
}

std::vector<int> beam_core(const StepScorer& scorer, int vocab, int beam_size, int max_new,
                           double length_penalty) {
  if (beam_size < 1)
    throw std::invalid_argument("beam size must be >= 1, got " + std::to_string(beam_size));
  std::vector<BeamHypothesis> live = {BeamHypothesis{}};
  std::vector<BeamHypothesis> finished;

  for (int step = 0; step < max_new && !live.empty(); ++step) {
    struct Cand {
      std::size_t hyp;
      int token;
      double score;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (std::size_t h = 0; h < live.size(); ++h) {
      const std::vector<Real> lp = scorer(live[h].ids);
      if (static_cast<int>(lp.size()) != vocab)
        throw std::invalid_argument("scorer returned " + std::to_string(lp.size()) +
                                    " log-probs for vocab " + std::to_string(vocab));
      for (int v = 0; v < vocab; ++v)
        cands.push_back({h, v, live[h].log_prob + lp[static_cast<std::size_t>(v)]});
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam_size), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<BeamHypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Cand& c = cands[i];
      BeamHypothesis h = live[c.hyp];
      h.log_prob = c.score;
      if (c.token == kEosId) {
        h.finished = true;  // frozen from here on
        finished.push_back(std::move(h));
      } else {
        h.ids.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  // hypotheses still live at the length limit compete as forced-finished
  for (auto& h : live) finished.push_back(std::move(h));
  if (finished.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (normalized_score(finished[i], length_penalty) >
        normalized_score(finished[best], length_penalty))
      best = i;
  return finished[best].ids;
}

StepScorer make_ensemble_scorer(const std::vector<const TransferenceModel*>& models,
                                const std::vector<int>& src, const std::vector<int>& mt,
                                bool log_space) {
  if (models.empty()) throw std::invalid_argument("ensemble scorer needs at least one model");
  const int vocab = models[0]->config.vocab_size;
  for (const auto* m : models)
    if (m->config.vocab_size != vocab)
      throw std::invalid_argument("ensemble models disagree on vocabulary size: " +
                                  std::to_string(vocab) + " vs " +
                                  std::to_string(m->config.vocab_size));
  // encoder side is fixed for the whole search
  auto memories = std::make_shared<std::vector<DecoderMemory>>();
  Rng rng(0);  // eval mode: never consumed
  for (const auto* m : models) memories->push_back(encode_memory(*m, {src}, {mt}, false, rng));

  return [models, memories, vocab, log_space](const std::vector<int>& prefix) {
    std::vector<Real> acc(static_cast<std::size_t>(vocab), 0.0);
    Rng r(0);
    const PaddedBatch pe_in = pad_batch({with_bos(prefix)});
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      Tensor logits = decode_pe_logits(*models[mi], (*memories)[mi].states, (*memories)[mi].keys,
                                       pe_in, false, r);
      const int last = logits.dim(1) - 1;
      // stable log-softmax of the last position
      Real mx = logits.at(0, last, 0);
      for (int v = 1; v < vocab; ++v) mx = std::max(mx, logits.at(0, last, v));
      Real denom = 0.0;
      for (int v = 0; v < vocab; ++v) denom += std::exp(logits.at(0, last, v) - mx);
      const Real lse = mx + std::log(denom);
      for (int v = 0; v < vocab; ++v) {
        const Real lp = logits.at(0, last, v) - lse;
        acc[static_cast<std::size_t>(v)] += log_space ? lp : std::exp(lp);
      }
    }
    const Real inv = 1.0 / static_cast<Real>(models.size());
    for (int v = 0; v < vocab; ++v) {
      Real& x = acc[static_cast<std::size_t>(v)];
      x = log_space ? x * inv : std::log(x * inv);
    }
    return acc;
  };
}

namespace {

int resolve_max_new(const TransferenceModel& m, const std::vector<int>& mt, int max_len) {
  int n = max_len < 0 ? static_cast<int>(mt.size()) + 50 : max_len;
  return std::min(n, m.config.max_len);
}

}  // namespace

std::vector<int> greedy_decode(const TransferenceModel& model, const std::vector<int>& src,
                               const std::vector<int>& mt, int max_len) {
  const StepScorer scorer = make_ensemble_scorer({&model}, src, mt);
  return greedy_core(scorer, resolve_max_new(model, mt, max_len));
}

std::vector<int> beam_search(const std::vector<const TransferenceModel*>& models,
                             const std::vector<int>& src, const std::vector<int>& mt,
                             int beam_size, int max_len, double length_penalty, bool log_space) {
  if (models.empty()) throw std::invalid_argument("beam_search: empty model list");
  const StepScorer scorer = make_ensemble_scorer(models, src, mt, log_space);
  return beam_core(scorer, models[0]->config.vocab_size, beam_size,
                   resolve_max_new(*models[0], mt, max_len), length_penalty);
}

CorpusDecodeResult decode_corpus(const std::vector<const TransferenceModel*>& models,
                                 const TripletCorpus& corpus, const MergeTable& table,
                                 int beam_size, double length_penalty, int max_len,
                                 const std::string& out_path) {
  if (corpus.encoded.size() != corpus.size())
    throw std::invalid_argument("decode_corpus: corpus is not encoded");
  if (corpus.size() == 0) throw std::invalid_argument("decode_corpus: empty corpus");
  CorpusDecodeResult r;
  r.hyps.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const TripletExample& ex = corpus.encoded[i];
    const std::vector<int> out =
        beam_search(models, ex.src, ex.mt, beam_size, max_len, length_penalty);
    r.hyps.push_back(table.decode(out));
  }
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write hypotheses to " + out_path);
    for (const auto& h : r.hyps) f << h << '\n';
  }
  r.bleu = bleu_corpus_text(r.hyps, corpus.pe);
  r.ter = corpus_ter_text(r.hyps, corpus.pe);
  return r;
}

}  // namespace ape
