#include "ape/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ape {

Tensor make_attention_mask(MaskMode mode, int batch, int len_q, int len_k,
                           const std::vector<int>& key_lens) {
  const bool causal = mode == MaskMode::Causal || mode == MaskMode::CausalPadding;
  const bool padding = mode == MaskMode::Padding || mode == MaskMode::CausalPadding;
  if (causal && len_q != len_k)
    throw std::invalid_argument("causal mask requires len_q == len_k, got " +
                                std::to_string(len_q) + " and " + std::to_string(len_k));
  if (padding && static_cast<int>(key_lens.size()) != batch)
    throw std::invalid_argument("padding mask needs one key length per batch item: got " +
                                std::to_string(key_lens.size()) + " for batch " +
                                std::to_string(batch));
  Tensor m = Tensor::zeros({batch, len_q, len_k});
  for (int b = 0; b < batch; ++b) {
    const int real = padding ? key_lens[static_cast<std::size_t>(b)] : len_k;
    for (int i = 0; i < len_q; ++i)
      for (int j = 0; j < len_k; ++j)
        if ((causal && j > i) || j >= real) m.at(b, i, j) = kBlockedLogit;
  }
  return m;
}

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
  const Real limit = std::sqrt(6.0 / (rows + cols));
  std::vector<Real> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor::param({rows, cols}, std::move(v));
}

MhaParams init_mha(int d_model, Rng& rng) {
  return MhaParams{xavier_uniform(d_model, d_model, rng), xavier_uniform(d_model, d_model, rng),
                   xavier_uniform(d_model, d_model, rng), xavier_uniform(d_model, d_model, rng)};
}

FfnParams init_ffn(int d_model, int d_ff, Rng& rng) {
  FfnParams p;
  p.w1 = xavier_uniform(d_model, d_ff, rng);
  p.b1 = Tensor::param({d_ff}, std::vector<Real>(static_cast<std::size_t>(d_ff), 0.0));
  p.w2 = xavier_uniform(d_ff, d_model, rng);
  p.b2 = Tensor::param({d_model}, std::vector<Real>(static_cast<std::size_t>(d_model), 0.0));
  return p;
}

LayerNormParams init_layer_norm(int d_model) {
  LayerNormParams p;
  p.gain = Tensor::param({d_model}, std::vector<Real>(static_cast<std::size_t>(d_model), 1.0));
  p.bias = Tensor::param({d_model}, std::vector<Real>(static_cast<std::size_t>(d_model), 0.0));
  return p;
}

Tensor sinusoidal_positions(int max_len, int d_model) {
  if (d_model % 2 != 0)
    throw std::invalid_argument("sinusoidal positions need an even d_model, got " +
                                std::to_string(d_model));
  Tensor pe = Tensor::zeros({max_len, d_model});
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const Real rate = std::pow(10000.0, static_cast<Real>(i) / d_model);
      pe.at(pos, i) = std::sin(pos / rate);
      pe.at(pos, i + 1) = std::cos(pos / rate);
    }
  }
  return pe;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MhaParams& params, const Tensor& mask, int heads) {
  if (q_in.rank() != 3 || k_in.rank() != 3 || v_in.rank() != 3)
    throw std::invalid_argument("multi_head_attention expects [B, L, d] inputs");
  const int b = q_in.dim(0), lq = q_in.dim(1), d = q_in.dim(2), lk = k_in.dim(1);
  if (d % heads != 0)
    throw std::invalid_argument("d_model " + std::to_string(d) + " not divisible by heads " +
                                std::to_string(heads));
  if (k_in.dim(0) != b || v_in.dim(0) != b || v_in.dim(1) != lk || k_in.dim(2) != d ||
      v_in.dim(2) != d)
    throw std::invalid_argument("multi_head_attention: inconsistent inputs " +
                                shape_str(q_in.shape) + ", " + shape_str(k_in.shape) + ", " +
                                shape_str(v_in.shape));
  if (mask.shape != Shape{b, lq, lk})
    throw std::invalid_argument("attention mask " + shape_str(mask.shape) +
                                " does not match lengths [" + std::to_string(b) + "x" +
                                std::to_string(lq) + "x" + std::to_string(lk) + "]");
  const int dk = d / heads;
  Tensor q = split_heads(matmul(q_in, params.w_q), heads);
  Tensor k = split_heads(matmul(k_in, params.w_k), heads);
  Tensor v = split_heads(matmul(v_in, params.w_v), heads);
  Tensor scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<Real>(dk)));
  Tensor weights = softmax(add_attn_mask(scores, mask, heads), 2);
  Tensor ctx = merge_heads(matmul(weights, v), heads);
  return matmul(ctx, params.w_o);
}

Tensor positionwise_ffn(const Tensor& x, const FfnParams& params) {
  Tensor h = relu(add_bias(matmul(x, params.w1), params.b1));
  return add_bias(matmul(h, params.w2), params.b2);
}

Tensor sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& f,
                const LayerNormParams& ln, Real dropout_rate, bool train, Rng& rng) {
  return layer_norm(add(x, dropout(f(x), dropout_rate, train, rng)), ln.gain, ln.bias);
}

}  // namespace ape
