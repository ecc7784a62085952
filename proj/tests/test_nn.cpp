#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ape/nn.hpp"
#include "gradcheck.hpp"

using namespace ape;
using ape::testing::max_grad_check_err;
using ape::testing::random_param;

namespace {

std::vector<Tensor*> mha_param_ptrs(MhaParams& p) {
  return {&p.w_q, &p.w_k, &p.w_v, &p.w_o};
}

}  // namespace

TEST_CASE("sinusoidal positions") {
  Tensor pe = sinusoidal_positions(16, 8);
  // position 0: sin slots 0, cos slots 1
  for (int i = 0; i < 8; i += 2) {
    CHECK(pe.at(0, i) == doctest::Approx(0.0));
    CHECK(pe.at(0, i + 1) == doctest::Approx(1.0));
  }
  for (std::size_t i = 0; i < pe.numel(); ++i) {
    CHECK(pe.at(static_cast<int>(i)) >= -1.0);
    CHECK(pe.at(static_cast<int>(i)) <= 1.0);
  }
  // pos 1, d_model 4: (sin 1, cos 1, sin 1e-2, cos 1e-2)
  Tensor pe4 = sinusoidal_positions(4, 4);
  CHECK(pe4.at(1, 0) == doctest::Approx(std::sin(1.0)));
  CHECK(pe4.at(1, 1) == doctest::Approx(std::cos(1.0)));
  CHECK(pe4.at(1, 2) == doctest::Approx(std::sin(0.01)));
  CHECK(pe4.at(1, 3) == doctest::Approx(std::cos(0.01)));

  CHECK_THROWS_AS(sinusoidal_positions(4, 5), std::invalid_argument);
}

TEST_CASE("attention masks") {
  Tensor causal = make_attention_mask(MaskMode::Causal, 1, 3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(causal.at(0, i, j) == (j > i ? kBlockedLogit : 0.0));

  Tensor padded = make_attention_mask(MaskMode::Padding, 2, 2, 4, {3, 1});
  CHECK(padded.at(0, 0, 2) == 0.0);
  CHECK(padded.at(0, 0, 3) == kBlockedLogit);
  CHECK(padded.at(1, 1, 1) == kBlockedLogit);

  CHECK_THROWS_AS(make_attention_mask(MaskMode::Causal, 1, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(make_attention_mask(MaskMode::Padding, 2, 2, 4, {3}), std::invalid_argument);
}

TEST_CASE("singleton attention reduces to W_o W_v v") {
  Rng rng(1);
  const int d = 8;
  MhaParams p = init_mha(d, rng);
  Tensor v = random_param({1, 1, d}, rng);
  Tensor mask = make_attention_mask(MaskMode::None, 1, 1, 1);
  Tensor out = multi_head_attention(v, v, v, p, mask, 2);
  Tensor expect = matmul(matmul(v, p.w_v), p.w_o);
  for (std::size_t i = 0; i < out.numel(); ++i)
    CHECK(out.at(static_cast<int>(i)) == doctest::Approx(expect.at(static_cast<int>(i))));
}

TEST_CASE("causal attention is future-blind, bitwise") {
  Rng rng(2);
  const int d = 8, len = 5;
  MhaParams p = init_mha(d, rng);
  Tensor mask = make_attention_mask(MaskMode::Causal, 1, len, len);
  Tensor x = random_param({1, len, d}, rng);
  Tensor base = multi_head_attention(x, x, x, p, mask, 2);
  for (int t = 0; t < len - 1; ++t) {
    Tensor perturbed = Tensor::from(x.shape, *x.values);
    for (int j = t + 1; j < len; ++j)
      for (int c = 0; c < d; ++c) perturbed.at(0, j, c) += 3.7;
    Tensor out = multi_head_attention(perturbed, perturbed, perturbed, p, mask, 2);
    for (int i = 0; i <= t; ++i)
      for (int c = 0; c < d; ++c) CHECK(out.at(0, i, c) == base.at(0, i, c));
  }
}

TEST_CASE("unmasked attention lets every position see every other") {
  Rng rng(3);
  const int d = 8, len = 4;
  MhaParams p = init_mha(d, rng);
  Tensor mask = make_attention_mask(MaskMode::None, 1, len, len);
  Tensor x = random_param({1, len, d}, rng);
  Tensor base = multi_head_attention(x, x, x, p, mask, 2);
  for (int j = 0; j < len; ++j) {
    Tensor perturbed = Tensor::from(x.shape, *x.values);
    for (int c = 0; c < d; ++c) perturbed.at(0, j, c) += 1.0;
    Tensor out = multi_head_attention(perturbed, perturbed, perturbed, p, mask, 2);
    for (int i = 0; i < len; ++i) {
      Real delta = 0;
      for (int c = 0; c < d; ++c) delta += std::abs(out.at(0, i, c) - base.at(0, i, c));
      CHECK(delta > 0.0);
    }
  }
}

TEST_CASE("identical key rows give uniform attention") {
  Rng rng(4);
  const int d = 8, len = 3;
  MhaParams p = init_mha(d, rng);
  // all key/value rows identical
  Tensor kv = Tensor::zeros({1, len, d});
  for (int j = 0; j < len; ++j)
    for (int c = 0; c < d; ++c) kv.at(0, j, c) = 0.3 * c - 1.0;
  Tensor q = random_param({1, len, d}, rng);
  Tensor mask = make_attention_mask(MaskMode::None, 1, len, len);
  Tensor out = multi_head_attention(q, kv, kv, p, mask, 2);
  // uniform weights over identical values: every query gets the same context
  for (int i = 1; i < len; ++i)
    for (int c = 0; c < d; ++c) CHECK(out.at(0, i, c) == doctest::Approx(out.at(0, 0, c)));
}

TEST_CASE("h=1 matches a hand-rolled single-head reference") {
  Rng rng(5);
  const int d = 6, len = 4;
  MhaParams p = init_mha(d, rng);
  Tensor x = random_param({1, len, d}, rng);
  Tensor mask = make_attention_mask(MaskMode::None, 1, len, len);
  Tensor out = multi_head_attention(x, x, x, p, mask, 1);

  // independent single-head computation with plain loops
  Tensor q = matmul(x, p.w_q), k = matmul(x, p.w_k), v = matmul(x, p.w_v);
  const Real s = 1.0 / std::sqrt(static_cast<Real>(d));
  for (int i = 0; i < len; ++i) {
    std::vector<Real> logits(len);
    for (int j = 0; j < len; ++j) {
      Real dot = 0;
      for (int c = 0; c < d; ++c) dot += q.at(0, i, c) * k.at(0, j, c);
      logits[static_cast<std::size_t>(j)] = dot * s;
    }
    Real mx = logits[0];
    for (Real l : logits) mx = std::max(mx, l);
    Real denom = 0;
    for (Real& l : logits) {
      l = std::exp(l - mx);
      denom += l;
    }
    std::vector<Real> ctx(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < len; ++j)
      for (int c = 0; c < d; ++c)
        ctx[static_cast<std::size_t>(c)] += logits[static_cast<std::size_t>(j)] / denom * v.at(0, j, c);
    for (int c = 0; c < d; ++c) {
      Real o = 0;
      for (int cc = 0; cc < d; ++cc) o += ctx[static_cast<std::size_t>(cc)] * p.w_o.at(cc, c);
      CHECK(out.at(0, i, c) == doctest::Approx(o));
    }
  }
}

TEST_CASE("attention rejects mismatched masks") {
  Rng rng(6);
  MhaParams p = init_mha(8, rng);
  Tensor x = random_param({1, 3, 8}, rng);
  Tensor bad = make_attention_mask(MaskMode::None, 1, 4, 4);
  CHECK_THROWS_AS(multi_head_attention(x, x, x, p, bad, 2), std::invalid_argument);
  CHECK_THROWS_AS(multi_head_attention(x, x, x, p, make_attention_mask(MaskMode::None, 1, 3, 3), 3),
                  std::invalid_argument);
}

TEST_CASE("attention gradient") {
  Rng rng(7);
  const int d = 8, lq = 3, lk = 4;
  MhaParams p = init_mha(d, rng);
  Tensor q = random_param({1, lq, d}, rng);
  Tensor kv = random_param({1, lk, d}, rng);
  Tensor mask = make_attention_mask(MaskMode::Padding, 1, lq, lk, {3});
  Tensor r = random_param({1, lq, d}, rng);
  auto fwd = [&] { return sum(mul(multi_head_attention(q, kv, kv, p, mask, 2), r)); };
  std::vector<Tensor*> params = mha_param_ptrs(p);
  params.push_back(&q);
  params.push_back(&kv);
  CHECK(max_grad_check_err(fwd, params) < 1e-4);
}

TEST_CASE("positionwise ffn") {
  Rng rng(8);
  const int d = 6, dff = 12, len = 5;
  FfnParams p = init_ffn(d, dff, rng);
  Tensor x = random_param({1, len, d}, rng);

  SUBCASE("zero weights leave only the output bias") {
    FfnParams z = init_ffn(d, dff, rng);
    std::fill(z.w1.values->begin(), z.w1.values->end(), 0.0);
    std::fill(z.w2.values->begin(), z.w2.values->end(), 0.0);
    for (int j = 0; j < d; ++j) (*z.b2.values)[static_cast<std::size_t>(j)] = j + 0.5;
    Tensor y = positionwise_ffn(x, z);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < d; ++j) CHECK(y.at(0, i, j) == doctest::Approx(j + 0.5));
  }

  SUBCASE("permuting positions permutes outputs") {
    Tensor y = positionwise_ffn(x, p);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Tensor xp = Tensor::zeros(x.shape);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < d; ++j) xp.at(0, i, j) = x.at(0, perm[static_cast<std::size_t>(i)], j);
    Tensor yp = positionwise_ffn(xp, p);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(yp.at(0, i, j) == y.at(0, perm[static_cast<std::size_t>(i)], j));
  }

  SUBCASE("gradient") {
    Tensor r = random_param({1, len, d}, rng);
    auto fwd = [&] { return sum(mul(positionwise_ffn(x, p), r)); };
    CHECK(max_grad_check_err(fwd, {&p.w1, &p.b1, &p.w2, &p.b2, &x}) < 1e-4);
  }
}

TEST_CASE("sublayer wrapper") {
  Rng rng(9);
  const int d = 6;
  LayerNormParams ln = init_layer_norm(d);
  Tensor x = random_param({1, 3, d}, rng);
  Rng drop(1);

  SUBCASE("zero residual function reduces to layer_norm(x)") {
    auto zero_fn = [](const Tensor& t) { return scale(t, 0.0); };
    Tensor y = sublayer(x, zero_fn, ln, 0.0, false, drop);
    Tensor expect = layer_norm(x, ln.gain, ln.bias);
    for (std::size_t i = 0; i < y.numel(); ++i)
      CHECK(y.at(static_cast<int>(i)) == doctest::Approx(expect.at(static_cast<int>(i))));
    CHECK(y.shape == x.shape);
  }

  SUBCASE("residual path matters") {
    Rng prng(10);
    FfnParams p = init_ffn(d, 12, prng);
    auto fn = [&](const Tensor& t) { return positionwise_ffn(t, p); };
    Tensor with = sublayer(x, fn, ln, 0.0, false, drop);
    // same f, no residual
    Tensor without = layer_norm(positionwise_ffn(x, p), ln.gain, ln.bias);
    Real delta = 0;
    for (std::size_t i = 0; i < with.numel(); ++i)
      delta += std::abs(with.at(static_cast<int>(i)) - without.at(static_cast<int>(i)));
    CHECK(delta > 1e-3);
  }
}
