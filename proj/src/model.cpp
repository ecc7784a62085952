#include "ape/model.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ape {

Architecture architecture_from_string(const std::string& s) {
  if (s == "transference") return Architecture::Transference;
  if (s == "mt_to_pe") return Architecture::MtToPe;
  if (s == "concat_src_mt") return Architecture::ConcatSrcMt;
  throw std::invalid_argument("unknown architecture '" + s +
                              "' (expected transference, mt_to_pe or concat_src_mt)");
}

std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::Transference: return "transference";
    case Architecture::MtToPe: return "mt_to_pe";
    case Architecture::ConcatSrcMt: return "concat_src_mt";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (architecture == Architecture::Transference && n_src < 1)
    throw std::invalid_argument("transference needs n_src >= 1, got " + std::to_string(n_src));
  if (n_mt < 1 || n_pe < 1)
    throw std::invalid_argument("n_mt and n_pe must be >= 1, got " + std::to_string(n_mt) +
                                " and " + std::to_string(n_pe));
  if (d_model <= 0 || d_model % 2 != 0)
    throw std::invalid_argument("d_model must be positive and even, got " + std::to_string(d_model));
  if (heads < 1 || d_model % heads != 0)
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by heads " +
                                std::to_string(heads));
  if (d_ff < 1) throw std::invalid_argument("d_ff must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("dropout must be in [0,1), got " + std::to_string(dropout));
  if (vocab_size <= kNumSpecialIds)
    throw std::invalid_argument("vocab_size must exceed the " + std::to_string(kNumSpecialIds) +
                                " reserved ids, got " + std::to_string(vocab_size));
  if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream os;
  os << "architecture=" << architecture_name(architecture) << '\n'
     << "d_ff=" << d_ff << '\n'
     << "d_model=" << d_model << '\n'
     << "heads=" << heads << '\n'
     << "max_len=" << max_len << '\n'
     << "n_mt=" << n_mt << '\n'
     << "n_pe=" << n_pe << '\n'
     << "n_src=" << n_src << '\n'
     << "share_mt_pe_embeddings=" << (share_mt_pe_embeddings ? 1 : 0) << '\n'
     << "vocab_size=" << vocab_size << '\n';
  return os.str();
}

std::uint64_t ModelConfig::fingerprint() const {
  // FNV-1a 64
  std::uint64_t h = 1469598103934665603ull;
  for (char c : canonical_text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

ModelConfig ModelConfig::from_canonical_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig c;
  try {
    c.architecture = architecture_from_string(kv.at("architecture"));
    c.d_ff = std::stoi(kv.at("d_ff"));
    c.d_model = std::stoi(kv.at("d_model"));
    c.heads = std::stoi(kv.at("heads"));
    c.max_len = std::stoi(kv.at("max_len"));
    c.n_mt = std::stoi(kv.at("n_mt"));
    c.n_pe = std::stoi(kv.at("n_pe"));
    c.n_src = std::stoi(kv.at("n_src"));
    c.share_mt_pe_embeddings = kv.at("share_mt_pe_embeddings") == "1";
    c.vocab_size = std::stoi(kv.at("vocab_size"));
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("malformed model config block:\n" + text);
  }
  c.dropout = 0.0;  // training knob, not part of the canonical block
  return c;
}

namespace {

EncoderLayer init_encoder_layer(const ModelConfig& c, Rng& rng) {
  EncoderLayer l;
  l.self_attn = init_mha(c.d_model, rng);
  l.ln_self = init_layer_norm(c.d_model);
  l.ffn = init_ffn(c.d_model, c.d_ff, rng);
  l.ln_ffn = init_layer_norm(c.d_model);
  return l;
}

CrossLayer init_cross_layer(const ModelConfig& c, Rng& rng) {
  CrossLayer l;
  l.self_attn = init_mha(c.d_model, rng);
  l.ln_self = init_layer_norm(c.d_model);
  l.cross_attn = init_mha(c.d_model, rng);
  l.ln_cross = init_layer_norm(c.d_model);
  l.ffn = init_ffn(c.d_model, c.d_ff, rng);
  l.ln_ffn = init_layer_norm(c.d_model);
  return l;
}

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

void collect_mha(const std::string& prefix, MhaParams& p, NamedParams& out) {
  out.emplace_back(prefix + ".wq", &p.w_q);
  out.emplace_back(prefix + ".wk", &p.w_k);
  out.emplace_back(prefix + ".wv", &p.w_v);
  out.emplace_back(prefix + ".wo", &p.w_o);
}

void collect_ffn(const std::string& prefix, FfnParams& p, NamedParams& out) {
  out.emplace_back(prefix + ".w1", &p.w1);
  out.emplace_back(prefix + ".b1", &p.b1);
  out.emplace_back(prefix + ".w2", &p.w2);
  out.emplace_back(prefix + ".b2", &p.b2);
}

void collect_ln(const std::string& prefix, LayerNormParams& p, NamedParams& out) {
  out.emplace_back(prefix + ".gain", &p.gain);
  out.emplace_back(prefix + ".bias", &p.bias);
}

void collect_encoder_layer(const std::string& prefix, EncoderLayer& l, NamedParams& out) {
  collect_mha(prefix + ".self", l.self_attn, out);
  collect_ln(prefix + ".ln_self", l.ln_self, out);
  collect_ffn(prefix + ".ffn", l.ffn, out);
  collect_ln(prefix + ".ln_ffn", l.ln_ffn, out);
}

void collect_cross_layer(const std::string& prefix, CrossLayer& l, NamedParams& out) {
  collect_mha(prefix + ".self", l.self_attn, out);
  collect_ln(prefix + ".ln_self", l.ln_self, out);
  collect_mha(prefix + ".cross", l.cross_attn, out);
  collect_ln(prefix + ".ln_cross", l.ln_cross, out);
  collect_ffn(prefix + ".ffn", l.ffn, out);
  collect_ln(prefix + ".ln_ffn", l.ln_ffn, out);
}

}  // namespace

NamedParams TransferenceModel::named_parameters() {
  NamedParams out;
  const bool transference = config.architecture == Architecture::Transference;
  if (transference) out.emplace_back("embed.src", &src_embed);
  if (config.share_mt_pe_embeddings) {
    out.emplace_back("embed.shared", &pe_embed);
  } else {
    out.emplace_back("embed.mt", &mt_embed);
    out.emplace_back("embed.pe", &pe_embed);
  }
  for (std::size_t i = 0; i < src_stack.size(); ++i)
    collect_encoder_layer("src." + std::to_string(i), src_stack[i], out);
  for (std::size_t i = 0; i < srcmt_stack.size(); ++i)
    collect_cross_layer("srcmt." + std::to_string(i), srcmt_stack[i], out);
  for (std::size_t i = 0; i < mt_stack.size(); ++i)
    collect_encoder_layer("mt." + std::to_string(i), mt_stack[i], out);
  for (std::size_t i = 0; i < pe_stack.size(); ++i)
    collect_cross_layer("pe." + std::to_string(i), pe_stack[i], out);
  if (transference) collect_ln("final_ln.src", final_ln_src, out);
  collect_ln("final_ln.mem", final_ln_mem, out);
  collect_ln("final_ln.pe", final_ln_pe, out);
  return out;
}

std::vector<Tensor*> TransferenceModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void TransferenceModel::zero_grads() {
  for (Tensor* p : parameters()) p->zero_grad();
}

TransferenceModel init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  TransferenceModel m;
  m.config = config;
  Rng rng(seed);
  const bool transference = config.architecture == Architecture::Transference;
  if (transference) m.src_embed = xavier_uniform(config.vocab_size, config.d_model, rng);
  m.pe_embed = xavier_uniform(config.vocab_size, config.d_model, rng);
  if (config.share_mt_pe_embeddings) {
    m.mt_embed = m.pe_embed;  // same storage: mutating one is visible in the other
  } else {
    m.mt_embed = xavier_uniform(config.vocab_size, config.d_model, rng);
  }
  if (transference) {
    for (int i = 0; i < config.n_src; ++i) m.src_stack.push_back(init_encoder_layer(config, rng));
    for (int i = 0; i < config.n_mt; ++i) m.srcmt_stack.push_back(init_cross_layer(config, rng));
    m.final_ln_src = init_layer_norm(config.d_model);
  } else {
    for (int i = 0; i < config.n_mt; ++i) m.mt_stack.push_back(init_encoder_layer(config, rng));
  }
  for (int i = 0; i < config.n_pe; ++i) m.pe_stack.push_back(init_cross_layer(config, rng));
  m.final_ln_mem = init_layer_norm(config.d_model);
  m.final_ln_pe = init_layer_norm(config.d_model);
  m.positions = sinusoidal_positions(config.max_len + 1, config.d_model);
  return m;
}

std::size_t count_params(TransferenceModel& model) {
  std::size_t n = 0;
  for (Tensor* p : model.parameters()) n += p->numel();
  return n;
}

PaddedBatch pad_batch(const std::vector<std::vector<int>>& seqs, int min_len) {
  if (seqs.empty()) throw std::invalid_argument("pad_batch: empty batch");
  PaddedBatch b;
  b.batch = static_cast<int>(seqs.size());
  b.len = min_len;
  for (const auto& s : seqs) b.len = std::max(b.len, static_cast<int>(s.size()));
  if (b.len == 0) throw std::invalid_argument("pad_batch: all sequences empty");
  b.ids.assign(static_cast<std::size_t>(b.batch) * b.len, kPadId);
  for (int i = 0; i < b.batch; ++i) {
    const auto& s = seqs[static_cast<std::size_t>(i)];
    b.lens.push_back(static_cast<int>(s.size()));
    std::copy(s.begin(), s.end(), b.ids.begin() + static_cast<std::size_t>(i) * b.len);
  }
  return b;
}

std::vector<int> with_eos(std::vector<int> ids) {
  ids.push_back(kEosId);
  return ids;
}

std::vector<int> with_bos(const std::vector<int>& ids) {
  std::vector<int> out;
  out.reserve(ids.size() + 1);
  out.push_back(kBosId);
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

std::vector<int> concat_with_separator(const std::vector<int>& src, const std::vector<int>& mt) {
  std::vector<int> out;
  out.reserve(src.size() + mt.size() + 1);
  out.insert(out.end(), src.begin(), src.end());
  out.push_back(kSepId);
  out.insert(out.end(), mt.begin(), mt.end());
  return out;
}

namespace {

void check_batch_len(const PaddedBatch& b, const ModelConfig& c, const char* what) {
  for (int l : b.lens)
    if (l > c.max_len + 1)  // +1 for the BOS/EOS added around raw sequences
      throw std::invalid_argument(std::string(what) + " sequence of length " + std::to_string(l) +
                                  " exceeds max_len " + std::to_string(c.max_len));
}

// embeddings * sqrt(d_model) + sinusoidal positions, then dropout
Tensor embed_sequence(const TransferenceModel& m, const Tensor& table, const PaddedBatch& b,
                      bool train, Rng& rng) {
  const int d = m.config.d_model;
  if (b.len > m.positions.dim(0))
    throw std::invalid_argument("padded width " + std::to_string(b.len) +
                                " exceeds the positional table (" +
                                std::to_string(m.positions.dim(0)) + " rows)");
  Tensor e = reshape(embed_lookup(table, b.ids), {b.batch, b.len, d});
  e = scale(e, std::sqrt(static_cast<Real>(d)));
  // positions as a constant, broadcast over the batch
  Tensor pos = Tensor::zeros({b.batch, b.len, d});
  for (int i = 0; i < b.batch; ++i)
    std::copy(m.positions.values->begin(), m.positions.values->begin() + static_cast<std::size_t>(b.len) * d,
              pos.values->begin() + static_cast<std::size_t>(i) * b.len * d);
  return dropout(add(e, pos), m.config.dropout, train, rng);
}

Tensor run_encoder_stack(const TransferenceModel& m, const std::vector<EncoderLayer>& stack,
                         const LayerNormParams& final_ln, Tensor x, const PaddedBatch& keys,
                         bool train, Rng& rng) {
  const Real rate = m.config.dropout;
  const int h = m.config.heads;
  Tensor mask = make_attention_mask(MaskMode::Padding, keys.batch, x.dim(1), x.dim(1), keys.lens);
  for (const EncoderLayer& l : stack) {
    x = sublayer(
        x, [&](const Tensor& t) { return multi_head_attention(t, t, t, l.self_attn, mask, h); },
        l.ln_self, rate, train, rng);
    x = sublayer(x, [&](const Tensor& t) { return positionwise_ffn(t, l.ffn); }, l.ln_ffn, rate,
                 train, rng);
  }
  return layer_norm(x, final_ln.gain, final_ln.bias);
}

Tensor run_cross_stack(const TransferenceModel& m, const std::vector<CrossLayer>& stack,
                       const LayerNormParams& final_ln, Tensor x, const PaddedBatch& self_keys,
                       MaskMode self_mode, const Tensor& memory, const PaddedBatch& memory_keys,
                       bool train, Rng& rng) {
  const Real rate = m.config.dropout;
  const int h = m.config.heads;
  Tensor self_mask =
      make_attention_mask(self_mode, self_keys.batch, x.dim(1), x.dim(1), self_keys.lens);
  Tensor cross_mask = make_attention_mask(MaskMode::Padding, memory_keys.batch, x.dim(1),
                                          memory.dim(1), memory_keys.lens);
  for (const CrossLayer& l : stack) {
    x = sublayer(
        x, [&](const Tensor& t) { return multi_head_attention(t, t, t, l.self_attn, self_mask, h); },
        l.ln_self, rate, train, rng);
    x = sublayer(
        x,
        [&](const Tensor& t) {
          return multi_head_attention(t, memory, memory, l.cross_attn, cross_mask, h);
        },
        l.ln_cross, rate, train, rng);
    x = sublayer(x, [&](const Tensor& t) { return positionwise_ffn(t, l.ffn); }, l.ln_ffn, rate,
                 train, rng);
  }
  return layer_norm(x, final_ln.gain, final_ln.bias);
}

}  // namespace

Tensor encode_src(const TransferenceModel& m, const PaddedBatch& src, bool train, Rng& rng) {
  if (m.config.architecture != Architecture::Transference)
    throw std::invalid_argument("encode_src: " + architecture_name(m.config.architecture) +
                                " has no src encoder");
  check_batch_len(src, m.config, "src");
  Tensor x = embed_sequence(m, m.src_embed, src, train, rng);
  return run_encoder_stack(m, m.src_stack, m.final_ln_src, x, src, train, rng);
}

Tensor encode_src_mt(const TransferenceModel& m, const Tensor& enc_src, const PaddedBatch& src,
                     const PaddedBatch& mt, bool train, Rng& rng) {
  if (m.config.architecture != Architecture::Transference)
    throw std::invalid_argument("encode_src_mt: " + architecture_name(m.config.architecture) +
                                " has no second encoder");
  if (!enc_src.values || enc_src.rank() != 3)
    throw std::invalid_argument("encode_src_mt: missing enc_src input");
  check_batch_len(mt, m.config, "mt");
  Tensor x = embed_sequence(m, m.mt_embed, mt, train, rng);
  // the architectural point: self-attention over mt is NOT causally masked
  return run_cross_stack(m, m.srcmt_stack, m.final_ln_mem, x, mt, MaskMode::Padding, enc_src, src,
                         train, rng);
}

Tensor decode_pe_logits(const TransferenceModel& m, const Tensor& memory,
                        const PaddedBatch& memory_keys, const PaddedBatch& pe_in, bool train,
                        Rng& rng) {
  if (!memory.values || memory.rank() != 3)
    throw std::invalid_argument("decode_pe_logits: missing encoder memory");
  check_batch_len(pe_in, m.config, "pe");
  Tensor x = embed_sequence(m, m.pe_embed, pe_in, train, rng);
  x = run_cross_stack(m, m.pe_stack, m.final_ln_pe, x, pe_in, MaskMode::CausalPadding, memory,
                      memory_keys, train, rng);
  return matmul_nt(x, m.pe_embed);  // tied output projection
}

DecoderMemory encode_memory(const TransferenceModel& m, const std::vector<std::vector<int>>& src,
                            const std::vector<std::vector<int>>& mt, bool train, Rng& rng) {
  if (src.size() != mt.size())
    throw std::invalid_argument("encode_memory: " + std::to_string(src.size()) + " src vs " +
                                std::to_string(mt.size()) + " mt sequences");
  DecoderMemory out;
  switch (m.config.architecture) {
    case Architecture::Transference: {
      std::vector<std::vector<int>> src_in, mt_in;
      for (const auto& s : src) src_in.push_back(with_eos(s));
      for (const auto& t : mt) mt_in.push_back(with_eos(t));
      PaddedBatch sb = pad_batch(src_in), mb = pad_batch(mt_in);
      Tensor enc = encode_src(m, sb, train, rng);
      out.states = encode_src_mt(m, enc, sb, mb, train, rng);
      out.keys = mb;
      return out;
    }
    case Architecture::MtToPe: {
      std::vector<std::vector<int>> mt_in;
      for (const auto& t : mt) mt_in.push_back(with_eos(t));
      PaddedBatch mb = pad_batch(mt_in);
      check_batch_len(mb, m.config, "mt");
      Tensor x = embed_sequence(m, m.mt_embed, mb, train, rng);
      out.states = run_encoder_stack(m, m.mt_stack, m.final_ln_mem, x, mb, train, rng);
      out.keys = mb;
      return out;
    }
    case Architecture::ConcatSrcMt: {
      std::vector<std::vector<int>> cat;
      for (std::size_t i = 0; i < src.size(); ++i)
        cat.push_back(with_eos(concat_with_separator(src[i], mt[i])));
      PaddedBatch cb = pad_batch(cat);
      check_batch_len(cb, m.config, "src++mt");
      // single-encoder baseline keeps the mt/pe embedding table for its input
      Tensor x = embed_sequence(m, m.mt_embed, cb, train, rng);
      out.states = run_encoder_stack(m, m.mt_stack, m.final_ln_mem, x, cb, train, rng);
      out.keys = cb;
      return out;
    }
  }
  throw std::logic_error("unreachable architecture");
}

LossResult forward_loss(const TransferenceModel& m, const std::vector<TripletExample>& batch,
                        bool train, Rng& rng, Real label_smoothing, long norm_count) {
  if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");
  std::vector<std::vector<int>> src, mt, pe_in;
  std::vector<int> targets;
  for (const TripletExample& ex : batch) {
    src.push_back(ex.src);
    mt.push_back(ex.mt);
    pe_in.push_back(with_bos(ex.pe));
  }
  PaddedBatch pb = pad_batch(pe_in);
  // targets: p ++ EOS, right-padded to match the decoder input width
  targets.assign(static_cast<std::size_t>(pb.batch) * pb.len, kPadId);
  long real = 0;
  for (int i = 0; i < pb.batch; ++i) {
    const auto& p = batch[static_cast<std::size_t>(i)].pe;
    for (std::size_t j = 0; j < p.size(); ++j) targets[static_cast<std::size_t>(i) * pb.len + j] = p[j];
    targets[static_cast<std::size_t>(i) * pb.len + p.size()] = kEosId;
    real += static_cast<long>(p.size()) + 1;
  }
  DecoderMemory mem = encode_memory(m, src, mt, train, rng);
  Tensor logits = decode_pe_logits(m, mem.states, mem.keys, pb, train, rng);
  LossResult r;
  r.loss = cross_entropy_loss(logits, targets, kPadId, label_smoothing, norm_count);
  r.target_tokens = real;
  return r;
}

}  // namespace ape
