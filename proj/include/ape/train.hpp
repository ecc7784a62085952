#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "ape/corpus.hpp"
#include "ape/model.hpp"

namespace ape {

struct TrainConfig {
  int warmup_steps = 8000;  // desk-scale runs override this downwards
  int token_budget = 2000;  // target-side tokens per optimizer step
  int max_len = 256;        // subword cap per side; longer examples are dropped
  int max_steps = 2000;
  int max_epochs = 0;  // 0: bounded by max_steps only
  int eval_interval = 200;
  std::uint64_t seed = 1;
  Real label_smoothing = 0.1;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.98;
  Real adam_eps = 1e-9;
  int grad_accum = 1;          // micro-batches per optimizer step
  bool reset_schedule = true;  // fine-tuning restarts the Noam schedule
  Real early_stop_loss = 0.0;  // stop once train loss drops below; 0 disables

  void validate() const;
};

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); rejects step < 1.
Real noam_lr(long step, int d_model, int warmup_steps);

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // example indices
  long dropped = 0;                               // over-length examples removed
};

// Shuffles per epoch_seed, length-sorts within fixed-size chunks to limit
// padding, then fills batches greedily up to token_budget pe tokens.
BatchPlan make_batches(const std::vector<TripletExample>& examples, int token_budget, int max_len,
                       std::uint64_t epoch_seed);

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::string config_text;  // ModelConfig canonical block
  long step = 0;
  double dev_loss = 0.0;
  double dev_bleu = 0.0;
  std::vector<std::pair<std::string, Tensor>> params;
};

Checkpoint snapshot_checkpoint(TransferenceModel& model, long step, double dev_loss,
                               double dev_bleu);
// Fingerprints must match; shapes are re-checked parameter by parameter.
void restore_checkpoint(TransferenceModel& model, const Checkpoint& ckpt);
// Builds an eval-ready model (dropout 0) from the stored config block.
TransferenceModel model_from_checkpoint(const Checkpoint& ckpt);

// Versioned binary container, little-endian; load(save(x)) is bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Element-wise arithmetic mean. Values are sorted per element before the
// anchored summation, so the result is independent of argument order and
// averaging identical checkpoints reproduces them bit-exactly.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);

enum class BestMetric { DevBleu, DevLoss };
// Indices of the k best checkpoints, best first; ties break on earlier step.
std::vector<std::size_t> select_best(const std::vector<Checkpoint>& ckpts, std::size_t k,
                                     BestMetric metric = BestMetric::DevBleu);

class Adam {
 public:
  Adam(Real beta1, Real beta2, Real eps);
  void step(const std::vector<Tensor*>& params, Real lr);

 private:
  Real beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

struct TrainLogRow {
  long step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_bleu = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;  // one per eval interval
  std::vector<TrainLogRow> log;
  long steps = 0;
  double final_train_loss = 0.0;
};

// Trains in place. Dev loss/BLEU are computed each eval_interval; dev BLEU
// uses greedy decoding detokenized through `table`. When checkpoint_dir is
// non-empty every checkpoint is also written there; log rows go to
// log_stream as TSV when given.
TrainResult train(TransferenceModel& model, const TripletCorpus& train_corpus,
                  const TripletCorpus& dev_corpus, const TrainConfig& config,
                  const MergeTable& table, const std::string& checkpoint_dir = "",
                  std::ostream* log_stream = nullptr, long start_step = 0);

// Restores the checkpoint into `model` (fingerprint-checked) and continues
// training on the subset; the schedule restarts unless config.reset_schedule
// is off, in which case the stored step count carries over.
TrainResult fine_tune(TransferenceModel& model, const Checkpoint& init,
                      const TripletCorpus& train_corpus, const TripletCorpus& dev_corpus,
                      const TrainConfig& config, const MergeTable& table,
                      const std::string& checkpoint_dir = "", std::ostream* log_stream = nullptr);

}  // namespace ape
