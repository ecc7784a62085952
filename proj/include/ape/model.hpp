#pragma once

#include <string>
#include <utility>

#include "ape/nn.hpp"

namespace ape {

// transference: enc_src -> enc_src_mt (unmasked decoder block acting as a
//   second encoder) -> dec_pe.
// mt_to_pe: single self-attention encoder over mt, then dec_pe.
// concat_src_mt: single self-attention encoder over src ++ SEP ++ mt, then dec_pe.
enum class Architecture { Transference, MtToPe, ConcatSrcMt };

Architecture architecture_from_string(const std::string& s);
std::string architecture_name(Architecture a);

struct ModelConfig {
  int n_src = 2;
  int n_mt = 2;
  int n_pe = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 256;
  Real dropout = 0.1;
  int vocab_size = 0;
  int max_len = 256;
  Architecture architecture = Architecture::Transference;
  bool share_mt_pe_embeddings = true;

  void validate() const;
  // Shape-determining fields only (dropout is a training knob), sorted keys.
  // This text and its FNV-1a hash are what checkpoints carry.
  std::string canonical_text() const;
  std::uint64_t fingerprint() const;
  static ModelConfig from_canonical_text(const std::string& text);
};

struct EncoderLayer {
  MhaParams self_attn;
  LayerNormParams ln_self;
  FfnParams ffn;
  LayerNormParams ln_ffn;
};

// Decoder-style layer: self-attention, cross-attention over a memory, FFN.
// Used unmasked in the second encoder and causally masked in the pe decoder.
struct CrossLayer {
  MhaParams self_attn;
  LayerNormParams ln_self;
  MhaParams cross_attn;
  LayerNormParams ln_cross;
  FfnParams ffn;
  LayerNormParams ln_ffn;
};

struct TransferenceModel {
  ModelConfig config;

  Tensor src_embed;  // [V, d], transference only
  Tensor mt_embed;   // same storage as pe_embed when embeddings are shared
  Tensor pe_embed;   // also the tied output projection

  std::vector<EncoderLayer> src_stack;    // N_src, transference only
  std::vector<CrossLayer> srcmt_stack;    // N_mt, transference only
  std::vector<EncoderLayer> mt_stack;     // N_mt, single-encoder baselines
  std::vector<CrossLayer> pe_stack;       // N_pe
  LayerNormParams final_ln_src, final_ln_mem, final_ln_pe;

  Tensor positions;  // sinusoidal table [max_len + 1, d], constant

  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
  void zero_grads();
};

TransferenceModel init_params(const ModelConfig& config, std::uint64_t seed);
std::size_t count_params(TransferenceModel& model);

// Right-padded id matrix. min_len widens the pad, never narrows it.
struct PaddedBatch {
  int batch = 0;
  int len = 0;
  std::vector<int> ids;   // [batch, len]
  std::vector<int> lens;  // real lengths
};

PaddedBatch pad_batch(const std::vector<std::vector<int>>& seqs, int min_len = 0);

std::vector<int> with_eos(std::vector<int> ids);
std::vector<int> with_bos(const std::vector<int>& ids);
std::vector<int> concat_with_separator(const std::vector<int>& src, const std::vector<int>& mt);

// N_src layers of (unmasked self-attention with padding, FFN) over src ids.
Tensor encode_src(const TransferenceModel& m, const PaddedBatch& src, bool train, Rng& rng);

// N_mt decoder-style layers without causal masking: unmasked self-attention
// over mt states, cross-attention with keys/values from enc_src, FFN.
Tensor encode_src_mt(const TransferenceModel& m, const Tensor& enc_src, const PaddedBatch& src,
                     const PaddedBatch& mt, bool train, Rng& rng);

// Teacher-forced decoder: pe_in is BOS + p. Returns logits [B, Lp, vocab]
// through the output projection tied to the pe embedding table.
Tensor decode_pe_logits(const TransferenceModel& m, const Tensor& memory,
                        const PaddedBatch& memory_keys, const PaddedBatch& pe_in, bool train,
                        Rng& rng);

// Decoder memory per architecture: enc_src_mt output for transference, plain
// mt (or src++SEP++mt) encoding for the single-encoder baselines.
struct DecoderMemory {
  Tensor states;
  PaddedBatch keys;
};
DecoderMemory encode_memory(const TransferenceModel& m, const std::vector<std::vector<int>>& src,
                            const std::vector<std::vector<int>>& mt, bool train, Rng& rng);

struct LossResult {
  Tensor loss;
  long target_tokens = 0;
};

// Cross-entropy on pe targets for a batch of triplets. norm_count > 0
// overrides the mean divisor (exact gradient accumulation across micro-batches).
LossResult forward_loss(const TransferenceModel& m, const std::vector<TripletExample>& batch,
                        bool train, Rng& rng, Real label_smoothing, long norm_count = -1);

}  // namespace ape
