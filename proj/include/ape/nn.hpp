#pragma once

#include <functional>

#include "ape/tensor.hpp"

namespace ape {

// Additive logit value for blocked attention positions. Finite rather than
// -inf so fp32 builds cannot propagate NaN; exp() of it underflows to exact 0.
inline constexpr Real kBlockedLogit = -1e9;

enum class MaskMode { None, Causal, Padding, CausalPadding };

// Builds the additive mask [batch, len_q, len_k]: 0 where attention is
// allowed, kBlockedLogit where it is not. Causal modes forbid key j > query i;
// padding modes forbid keys at or beyond key_lens[b].
Tensor make_attention_mask(MaskMode mode, int batch, int len_q, int len_k,
                           const std::vector<int>& key_lens = {});

struct MhaParams {
  Tensor w_q, w_k, w_v, w_o;  // each [d_model, d_model]
};

struct FfnParams {
  Tensor w1, b1, w2, b2;  // d_model -> d_ff -> d_model
};

struct LayerNormParams {
  Tensor gain, bias;
};

Tensor xavier_uniform(int rows, int cols, Rng& rng);
MhaParams init_mha(int d_model, Rng& rng);
FfnParams init_ffn(int d_model, int d_ff, Rng& rng);
LayerNormParams init_layer_norm(int d_model);

// Standard sin/cos interleave: dimension pair 2i uses rate 10000^(2i/d).
Tensor sinusoidal_positions(int max_len, int d_model);

// q_in [B, Lq, d], k_in/v_in [B, Lk, d], mask [B, Lq, Lk].
// Self-attention when q_in == k_in == v_in, cross-attention otherwise.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const MhaParams& params, const Tensor& mask, int heads);

// Per-position max(0, x W1 + b1) W2 + b2; never mixes positions.
Tensor positionwise_ffn(const Tensor& x, const FfnParams& params);

// Post-norm residual wrapper: layer_norm(x + dropout(f(x))).
Tensor sublayer(const Tensor& x, const std::function<Tensor(const Tensor&)>& f,
                const LayerNormParams& ln, Real dropout_rate, bool train, Rng& rng);

}  // namespace ape
