#include "ape/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ape/decode.hpp"

namespace ape {

void TrainConfig::validate() const {
  if (warmup_steps < 1)
    throw std::invalid_argument("warmup_steps must be >= 1, got " + std::to_string(warmup_steps));
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (token_budget < max_len)
    throw std::invalid_argument("token_budget " + std::to_string(token_budget) +
                                " below the longest admissible sequence (max_len " +
                                std::to_string(max_len) + ")");
  if (max_steps < 0 || max_epochs < 0)
    throw std::invalid_argument("max_steps and max_epochs must be >= 0");
  if (eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (grad_accum < 1) throw std::invalid_argument("grad_accum must be >= 1");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
    throw std::invalid_argument("adam betas must lie in [0,1)");
  if (adam_eps <= 0) throw std::invalid_argument("adam_eps must be positive");
  if (label_smoothing < 0 || label_smoothing >= 1)
    throw std::invalid_argument("label_smoothing must lie in [0,1)");
  if (early_stop_loss < 0) throw std::invalid_argument("early_stop_loss must be >= 0");
}

Real noam_lr(long step, int d_model, int warmup_steps) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1, got " + std::to_string(step));
  const Real s = static_cast<Real>(step);
  return std::pow(static_cast<Real>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<Real>(warmup_steps), -1.5));
}

BatchPlan make_batches(const std::vector<TripletExample>& examples, int token_budget, int max_len,
                       std::uint64_t epoch_seed) {
  if (examples.empty()) throw std::invalid_argument("make_batches: empty corpus");
  if (token_budget < max_len)
    throw std::invalid_argument("make_batches: token_budget below max_len");
  BatchPlan plan;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const TripletExample& e = examples[i];
    if (static_cast<int>(e.src.size()) > max_len || static_cast<int>(e.mt.size()) > max_len ||
        static_cast<int>(e.pe.size()) > max_len) {
      ++plan.dropped;
    } else {
      keep.push_back(i);
    }
  }
  if (keep.empty())
    throw std::invalid_argument("make_batches: every example exceeds max_len " +
                                std::to_string(max_len));
  Rng rng(epoch_seed);
  fisher_yates_shuffle(keep, rng);

  // length-sort within fixed chunks of the shuffled order to limit padding
  constexpr std::size_t kChunk = 64;
  for (std::size_t base = 0; base < keep.size(); base += kChunk) {
    const auto end = keep.begin() + static_cast<long>(std::min(base + kChunk, keep.size()));
    std::stable_sort(keep.begin() + static_cast<long>(base), end,
                     [&](std::size_t a, std::size_t b) {
                       return examples[a].pe.size() < examples[b].pe.size();
                     });
  }

  std::vector<std::size_t> cur;
  long cur_tokens = 0;
  for (std::size_t idx : keep) {
    const long t = static_cast<long>(examples[idx].pe.size());
    if (!cur.empty() && cur_tokens + t > token_budget) {
      plan.batches.push_back(std::move(cur));
      cur.clear();
      cur_tokens = 0;
    }
    cur.push_back(idx);
    cur_tokens += t;
  }
  if (!cur.empty()) plan.batches.push_back(std::move(cur));
  return plan;
}

// ---- checkpoints ---------------------------------------------------------------

Checkpoint snapshot_checkpoint(TransferenceModel& model, long step, double dev_loss,
                               double dev_bleu) {
  Checkpoint c;
  c.fingerprint = model.config.fingerprint();
  c.config_text = model.config.canonical_text();
  c.step = step;
  c.dev_loss = dev_loss;
  c.dev_bleu = dev_bleu;
  for (auto& [name, t] : model.named_parameters())
    c.params.emplace_back(name, Tensor::from(t->shape, *t->values));
  return c;
}

void restore_checkpoint(TransferenceModel& model, const Checkpoint& ckpt) {
  if (model.config.fingerprint() != ckpt.fingerprint)
    throw std::invalid_argument(
        "checkpoint fingerprint mismatch: model config is\n" + model.config.canonical_text() +
        "checkpoint config is\n" + ckpt.config_text);
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ckpt.params) stored[name] = &t;
  for (auto& [name, t] : model.named_parameters()) {
    auto it = stored.find(name);
    if (it == stored.end())
      throw std::invalid_argument("checkpoint is missing parameter " + name);
    if (it->second->shape != t->shape)
      throw std::invalid_argument("checkpoint parameter " + name + " has shape " +
                                  shape_str(it->second->shape) + ", model expects " +
                                  shape_str(t->shape));
    *t->values = *it->second->values;
    stored.erase(it);
  }
  if (!stored.empty())
    throw std::invalid_argument("checkpoint carries unknown parameter " +
                                stored.begin()->first);
}

TransferenceModel model_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg = ModelConfig::from_canonical_text(ckpt.config_text);
  TransferenceModel m = init_params(cfg, 0);
  restore_checkpoint(m, ckpt);
  return m;
}

namespace {

constexpr char kCkptMagic[8] = {'A', 'P', 'E', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<long>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<long>(n));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint to " + path);
  f.write(kCkptMagic, sizeof kCkptMagic);
  put<std::uint32_t>(f, 1);
  put<std::uint64_t>(f, ckpt.fingerprint);
  put_string(f, ckpt.config_text);
  put<std::int64_t>(f, ckpt.step);
  put<double>(f, ckpt.dev_loss);
  put<double>(f, ckpt.dev_bleu);
  put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_string(f, name);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::int64_t>(f, d);
    f.write(reinterpret_cast<const char*>(t.values->data()),
            static_cast<long>(t.numel() * sizeof(Real)));
  }
  if (!f) throw std::runtime_error("write failure on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint from " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw std::runtime_error(path + " is not a checkpoint file");
  const auto version = take<std::uint32_t>(f);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.fingerprint = take<std::uint64_t>(f);
  c.config_text = take_string(f);
  c.step = take<std::int64_t>(f);
  c.dev_loss = take<double>(f);
  c.dev_bleu = take<double>(f);
  const auto n = take<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = take_string(f);
    const auto rank = take<std::uint32_t>(f);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(static_cast<int>(take<std::int64_t>(f)));
    std::vector<Real> values(shape_numel(shape));
    f.read(reinterpret_cast<char*>(values.data()),
           static_cast<long>(values.size() * sizeof(Real)));
    if (!f) throw std::runtime_error("truncated checkpoint " + path);
    c.params.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  return c;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw std::invalid_argument("average_checkpoints: empty list");
  const Checkpoint& first = ckpts[0];
  for (const Checkpoint& c : ckpts) {
    if (c.fingerprint != first.fingerprint)
      throw std::invalid_argument("average_checkpoints: mixed config fingerprints");
    if (c.params.size() != first.params.size())
      throw std::invalid_argument("average_checkpoints: parameter lists differ");
  }
  Checkpoint out;
  out.fingerprint = first.fingerprint;
  out.config_text = first.config_text;
  out.step = first.step;
  for (const Checkpoint& c : ckpts) out.step = std::max(out.step, c.step);
  const std::size_t n = ckpts.size();
  std::vector<Real> vals(n);
  for (std::size_t pi = 0; pi < first.params.size(); ++pi) {
    const auto& [name, proto] = first.params[pi];
    for (const Checkpoint& c : ckpts) {
      if (c.params[pi].first != name || c.params[pi].second.shape != proto.shape)
        throw std::invalid_argument("average_checkpoints: parameter " + name +
                                    " differs across checkpoints");
    }
    Tensor avg = Tensor::zeros(proto.shape);
    for (std::size_t e = 0; e < proto.numel(); ++e) {
      for (std::size_t ci = 0; ci < n; ++ci) vals[ci] = (*ckpts[ci].params[pi].second.values)[e];
      // sort: order-independent; anchored sum: identical inputs average to
      // themselves bit-exactly (all deviations are exact zeros)
      std::sort(vals.begin(), vals.end());
      Real dev = 0.0;
      for (std::size_t ci = 1; ci < n; ++ci) dev += vals[ci] - vals[0];
      (*avg.values)[e] = vals[0] + dev / static_cast<Real>(n);
    }
    out.params.emplace_back(name, std::move(avg));
  }
  return out;
}

std::vector<std::size_t> select_best(const std::vector<Checkpoint>& ckpts, std::size_t k,
                                     BestMetric metric) {
  if (k > ckpts.size())
    throw std::invalid_argument("select_best: asked for " + std::to_string(k) + " of " +
                                std::to_string(ckpts.size()) + " checkpoints");
  std::vector<std::size_t> idx(ckpts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (metric == BestMetric::DevBleu) {
      if (ckpts[a].dev_bleu != ckpts[b].dev_bleu) return ckpts[a].dev_bleu > ckpts[b].dev_bleu;
    } else {
      if (ckpts[a].dev_loss != ckpts[b].dev_loss) return ckpts[a].dev_loss < ckpts[b].dev_loss;
    }
    return ckpts[a].step < ckpts[b].step;
  });
  idx.resize(k);
  return idx;
}

// ---- optimizer -----------------------------------------------------------------

Adam::Adam(Real beta1, Real beta2, Real eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Tensor*>& params, Real lr) {
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->numel(), 0.0);
      v_.emplace_back(p->numel(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("Adam::step: parameter list changed size");
  ++t_;
  const Real bc1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    if (!p->grad) throw std::invalid_argument("Adam::step: parameter without gradient");
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const Real g = (*p->grad)[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const Real mhat = m[i] / bc1;
      const Real vhat = v[i] / bc2;
      (*p->values)[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---- training loop --------------------------------------------------------------

namespace {

double dev_loss_of(TransferenceModel& model, const TripletCorpus& dev, const TrainConfig& cfg) {
  Rng rng(0);
  BatchPlan plan = make_batches(dev.encoded, cfg.token_budget, cfg.max_len, 0);
  double weighted = 0.0;
  long tokens = 0;
  for (const auto& batch : plan.batches) {
    std::vector<TripletExample> ex;
    for (std::size_t i : batch) ex.push_back(dev.encoded[i]);
    LossResult r = forward_loss(model, ex, false, rng, cfg.label_smoothing);
    weighted += r.loss.item() * static_cast<double>(r.target_tokens);
    tokens += r.target_tokens;
  }
  return weighted / static_cast<double>(tokens);
}

double dev_bleu_of(TransferenceModel& model, const TripletCorpus& dev, const MergeTable& table) {
  std::vector<std::string> hyps;
  for (const TripletExample& ex : dev.encoded)
    hyps.push_back(table.decode(greedy_decode(model, ex.src, ex.mt)));
  return bleu_corpus_text(hyps, dev.pe);
}

std::string checkpoint_path(const std::string& dir, long step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "/checkpoint_%06ld.ckpt", step);
  return dir + buf;
}

}  // namespace

TrainResult train(TransferenceModel& model, const TripletCorpus& train_corpus,
                  const TripletCorpus& dev_corpus, const TrainConfig& config,
                  const MergeTable& table, const std::string& checkpoint_dir,
                  std::ostream* log_stream, long start_step) {
  config.validate();
  if (train_corpus.encoded.size() != train_corpus.size() || train_corpus.size() == 0)
    throw std::invalid_argument("train: training corpus is empty or not encoded");
  if (dev_corpus.encoded.size() != dev_corpus.size() || dev_corpus.size() == 0)
    throw std::invalid_argument("train: dev corpus is empty or not encoded");

  TrainResult result;
  Adam adam(config.adam_beta1, config.adam_beta2, config.adam_eps);
  auto params = model.parameters();
  Rng dropout_rng(config.seed ^ 0x5deece66dull);

  if (log_stream) *log_stream << "step\tlr\ttrain_loss\tdev_loss\tdev_bleu\n";

  auto evaluate = [&](long step, double lr, double train_loss) {
    const double dl = dev_loss_of(model, dev_corpus, config);
    const double db = dev_bleu_of(model, dev_corpus, table);
    result.log.push_back({step, lr, train_loss, dl, db});
    if (log_stream) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%ld\t%.6g\t%.6f\t%.6f\t%.2f\n", step, lr, train_loss, dl, db);
      *log_stream << buf << std::flush;
    }
    result.checkpoints.push_back(snapshot_checkpoint(model, step, dl, db));
    if (!checkpoint_dir.empty())
      save_checkpoint(result.checkpoints.back(), checkpoint_path(checkpoint_dir, step));
  };

  long step = start_step;
  bool done = config.max_steps == 0;
  double train_loss = 0.0;
  double last_lr = 0.0;
  for (int epoch = 0; !done && (config.max_epochs == 0 || epoch < config.max_epochs); ++epoch) {
    BatchPlan plan = make_batches(train_corpus.encoded, config.token_budget, config.max_len,
                                  config.seed + static_cast<std::uint64_t>(epoch));
    std::size_t bi = 0;
    while (bi < plan.batches.size() && !done) {
      // one optimizer step over grad_accum consecutive micro-batches
      const std::size_t group_end = std::min(bi + static_cast<std::size_t>(config.grad_accum),
                                             plan.batches.size());
      long group_tokens = 0;
      for (std::size_t g = bi; g < group_end; ++g)
        for (std::size_t i : plan.batches[g])
          group_tokens += static_cast<long>(train_corpus.encoded[i].pe.size()) + 1;  // + EOS
      model.zero_grads();
      double loss_acc = 0.0;
      for (std::size_t g = bi; g < group_end; ++g) {
        std::vector<TripletExample> ex;
        for (std::size_t i : plan.batches[g]) ex.push_back(train_corpus.encoded[i]);
        Tape tape;
        Tensor loss;
        {
          Recording rec(tape);
          loss = forward_loss(model, ex, true, dropout_rng, config.label_smoothing, group_tokens)
                     .loss;
        }
        tape.backward(loss);
        loss_acc += loss.item();
      }
      bi = group_end;
      train_loss = loss_acc;
      if (!std::isfinite(train_loss))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(step + 1));
      ++step;
      last_lr = noam_lr(step, model.config.d_model, config.warmup_steps);
      adam.step(params, last_lr);

      const bool stop_loss = config.early_stop_loss > 0 && train_loss < config.early_stop_loss;
      const bool stop_steps = step - start_step >= config.max_steps;
      if (step % config.eval_interval == 0 || stop_loss || stop_steps) {
        evaluate(step, last_lr, train_loss);
        if (stop_loss || stop_steps) done = true;
      }
    }
  }
  if (result.checkpoints.empty()) evaluate(step, last_lr, train_loss);
  result.steps = step - start_step;
  result.final_train_loss = train_loss;
  return result;
}

TrainResult fine_tune(TransferenceModel& model, const Checkpoint& init,
                      const TripletCorpus& train_corpus, const TripletCorpus& dev_corpus,
                      const TrainConfig& config, const MergeTable& table,
                      const std::string& checkpoint_dir, std::ostream* log_stream) {
  restore_checkpoint(model, init);
  const long start = config.reset_schedule ? 0 : init.step;
  return train(model, train_corpus, dev_corpus, config, table, checkpoint_dir, log_stream, start);
}

}  // namespace ape
