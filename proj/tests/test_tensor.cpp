#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ape/tensor.hpp"
#include "gradcheck.hpp"

using namespace ape;
using ape::testing::max_grad_check_err;
using ape::testing::random_param;

TEST_CASE("matmul identity and hand values") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {3, -1, 2, 5});
  Tensor out = matmul(eye, m);
  for (int i = 0; i < 4; ++i) CHECK(out.at(i) == m.at(i));

  // [[1,2],[3,4]] * [[1],[1]] = [[3],[7]]
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at(0) == doctest::Approx(3.0));
  CHECK(c.at(1) == doctest::Approx(7.0));
}

TEST_CASE("matmul rejects shape mismatch naming both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient vs finite differences") {
  Rng rng(7);
  Tensor a = random_param({3, 4}, rng);
  Tensor b = random_param({4, 2}, rng);
  Tensor r = random_param({3, 2}, rng);  // fixed projection to scalar
  auto fwd = [&] { return sum(mul(matmul(a, b), r)); };
  CHECK(max_grad_check_err(fwd, {&a, &b}) < 1e-6);
}

TEST_CASE("batched matmul and matmul_nt gradients") {
  Rng rng(11);
  Tensor a = random_param({2, 3, 4}, rng);
  Tensor b = random_param({2, 4, 5}, rng);
  Tensor r = random_param({2, 3, 5}, rng);
  auto fwd = [&] { return sum(mul(matmul(a, b), r)); };
  CHECK(max_grad_check_err(fwd, {&a, &b}) < 1e-6);

  Tensor c = random_param({2, 6, 4}, rng);
  Tensor r2 = random_param({2, 3, 6}, rng);
  auto fwd2 = [&] { return sum(mul(matmul_nt(a, c), r2)); };
  CHECK(max_grad_check_err(fwd2, {&a, &c}) < 1e-6);

  // rank-3 by transposed rank-2 (tied projection form)
  Tensor w = random_param({7, 4}, rng);
  Tensor r3 = random_param({2, 3, 7}, rng);
  auto fwd3 = [&] { return sum(mul(matmul_nt(a, w), r3)); };
  CHECK(max_grad_check_err(fwd3, {&a, &w}) < 1e-6);
}

TEST_CASE("reshape shares storage and gradient flow") {
  Rng rng(61);
  Tensor x = random_param({2, 6}, rng);
  Tensor r = random_param({3, 4}, rng);
  auto fwd = [&] { return sum(mul(reshape(x, {3, 4}), r)); };
  CHECK(max_grad_check_err(fwd, {&x}) < 1e-6);
  CHECK_THROWS_AS(reshape(x, {5, 2}), std::invalid_argument);
}

TEST_CASE("rank-3 by rank-2 matmul matches per-row result") {
  Rng rng(3);
  Tensor x = random_param({2, 3, 4}, rng);
  Tensor w = random_param({4, 2}, rng);
  Tensor y = matmul(x, w);
  REQUIRE(y.shape == Shape{2, 3, 2});
  for (int bi = 0; bi < 2; ++bi)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        Real s = 0;
        for (int k = 0; k < 4; ++k) s += x.at(bi, i, k) * w.at(k, j);
        CHECK(y.at(bi, i, j) == doctest::Approx(s));
      }
}

TEST_CASE("softmax basics") {
  Tensor z = softmax(Tensor::from({2}, {0, 0}), 0);
  CHECK(z.at(0) == doctest::Approx(0.5));
  CHECK(z.at(1) == doctest::Approx(0.5));

  // shift invariance, no overflow
  Tensor big = softmax(Tensor::from({2}, {1000, 1000}), 0);
  CHECK(big.at(0) == doctest::Approx(0.5));
  CHECK(std::isfinite(big.at(1)));

  // closed form e^0 / (e^0 + 3)
  Tensor t = softmax(Tensor::from({2}, {0.0, std::log(3.0)}), 0);
  CHECK(t.at(0) == doctest::Approx(0.25));
  CHECK(t.at(1) == doctest::Approx(0.75));
}

TEST_CASE("softmax rows sum to one and are non-negative") {
  Rng rng(5);
  Tensor x = random_param({3, 4, 5}, rng, -10, 10);
  for (int axis = 0; axis < 3; ++axis) {
    Tensor y = softmax(x, axis);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(static_cast<int>(i)) >= 0.0);
    // sum along the softmax axis
    const int n = x.dim(axis);
    std::size_t inner = 1;
    for (int i = axis + 1; i < 3; ++i) inner *= static_cast<std::size_t>(x.dim(i));
    const std::size_t outer = y.numel() / (inner * static_cast<std::size_t>(n));
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        Real s = 0;
        for (int i = 0; i < n; ++i)
          s += (*y.values)[(o * n + static_cast<std::size_t>(i)) * inner + in];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
  CHECK_THROWS_AS(softmax(x, 3), std::invalid_argument);
}

TEST_CASE("softmax gradient") {
  Rng rng(13);
  Tensor x = random_param({2, 5}, rng);
  Tensor r = random_param({2, 5}, rng);
  auto fwd = [&] { return sum(mul(softmax(x, 1), r)); };
  CHECK(max_grad_check_err(fwd, {&x}) < 1e-6);
}

TEST_CASE("layer_norm values") {
  Tensor g = Tensor::param({3}, {1, 1, 1});
  Tensor b = Tensor::param({3}, {0, 0, 0});
  // constant row -> zeros
  Tensor y = layer_norm(Tensor::from({1, 3}, {4, 4, 4}), g, b);
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == doctest::Approx(0.0));

  Tensor g2 = Tensor::param({2}, {1, 1});
  Tensor b2 = Tensor::param({2}, {0, 0});
  Tensor y2 = layer_norm(Tensor::from({1, 2}, {1, 3}), g2, b2);
  CHECK(y2.at(0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y2.at(1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm gradient") {
  Rng rng(17);
  Tensor x = random_param({4, 6}, rng);
  Tensor g = random_param({6}, rng, 0.5, 1.5);
  Tensor b = random_param({6}, rng);
  Tensor r = random_param({4, 6}, rng);
  auto fwd = [&] { return sum(mul(layer_norm(x, g, b), r)); };
  CHECK(max_grad_check_err(fwd, {&x, &g, &b}) < 1e-5);
}

TEST_CASE("elementwise kit gradients") {
  Rng rng(19);
  Tensor a = random_param({3, 4}, rng);
  Tensor b = random_param({3, 4}, rng);
  Tensor bias = random_param({4}, rng);
  Tensor r = random_param({3, 4}, rng);
  auto fwd = [&] {
    Tensor t = add(mul(a, b), scale(relu(a), 0.7));
    return sum(mul(add_bias(t, bias), r));
  };
  CHECK(max_grad_check_err(fwd, {&b, &bias}) < 1e-6);
}

TEST_CASE("head split/merge round trip and gradient") {
  Rng rng(23);
  Tensor x = random_param({2, 3, 8}, rng);
  Tensor back = merge_heads(split_heads(x, 4), 4);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(back.at(static_cast<int>(i)) == x.at(static_cast<int>(i)));

  Tensor r = random_param({8, 3, 2}, rng);
  auto fwd = [&] { return sum(mul(split_heads(x, 4), r)); };
  CHECK(max_grad_check_err(fwd, {&x}) < 1e-6);
}

TEST_CASE("add_attn_mask broadcast and gradient") {
  Rng rng(29);
  Tensor s = random_param({4, 2, 3}, rng);  // B=2, h=2
  Tensor m = Tensor::from({2, 2, 3}, {0, -1, 0, 0, 0, -1, -2, 0, 0, 0, -3, 0});
  Tensor y = add_attn_mask(s, m, 2);
  CHECK(y.at(0, 0, 1) == doctest::Approx(s.at(0, 0, 1) - 1.0));
  CHECK(y.at(1, 0, 1) == doctest::Approx(s.at(1, 0, 1) - 1.0));
  CHECK(y.at(2, 0, 0) == doctest::Approx(s.at(2, 0, 0) - 2.0));
  Tensor r = random_param({4, 2, 3}, rng);
  auto fwd = [&] { return sum(mul(add_attn_mask(s, m, 2), r)); };
  CHECK(max_grad_check_err(fwd, {&s}) < 1e-6);
}

TEST_CASE("dropout contract") {
  Rng rng(31);
  Tensor x = random_param({4, 4}, rng);
  Rng d1(99);
  Tensor same = dropout(x, 0.0, true, d1);
  CHECK(same.values.get() == x.values.get());  // rate 0 in training: identity
  Rng d2(99);
  Tensor eval = dropout(x, 0.5, false, d2);
  CHECK(eval.values.get() == x.values.get());  // eval: identity

  // deterministic given seed
  Rng a(123), b(123);
  Tensor da = dropout(x, 0.5, true, a);
  Tensor db = dropout(x, 0.5, true, b);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(da.at(static_cast<int>(i)) == db.at(static_cast<int>(i)));

  // survivors scaled by 1/(1-rate)
  bool saw_scaled = false;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const Real v = da.at(static_cast<int>(i));
    if (v != 0.0) {
      CHECK(v == doctest::Approx(2.0 * x.at(static_cast<int>(i))));
      saw_scaled = true;
    }
  }
  CHECK(saw_scaled);
  CHECK_THROWS_AS(dropout(x, 1.0, true, a), std::invalid_argument);
}

TEST_CASE("dropout gradient with frozen mask") {
  Rng rng(37);
  Tensor x = random_param({3, 3}, rng);
  Tensor r = random_param({3, 3}, rng);
  auto fwd = [&] {
    Rng d(55);  // reseeded per call: mask is fixed
    return sum(mul(dropout(x, 0.4, true, d), r));
  };
  CHECK(max_grad_check_err(fwd, {&x}) < 1e-6);
}

TEST_CASE("embed_lookup basics and gradient") {
  Tensor table = Tensor::param({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor row = embed_lookup(table, {1});
  CHECK(row.at(0) == doctest::Approx(0.0));
  CHECK(row.at(1) == doctest::Approx(1.0));
  CHECK(row.at(2) == doctest::Approx(0.0));

  try {
    embed_lookup(table, {0, 7});
    FAIL("expected vocabulary error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }

  Rng rng(41);
  Tensor t2 = random_param({5, 4}, rng);
  Tensor r = random_param({3, 4}, rng);
  auto fwd = [&] { return sum(mul(embed_lookup(t2, {4, 0, 4}), r)); };
  CHECK(max_grad_check_err(fwd, {&t2}) < 1e-6);
}

TEST_CASE("cross_entropy_loss values") {
  // near-one-hot logits, eps 0 -> loss ~ 0
  Tensor sharp = Tensor::from({1, 3}, {100.0, 0.0, 0.0});
  CHECK(cross_entropy_loss(sharp, {0}, kPadId, 0.0).item() == doctest::Approx(0.0).epsilon(1e-9));

  // uniform logits over vocab 4 -> ln 4
  Tensor uni = Tensor::from({1, 4}, {0.3, 0.3, 0.3, 0.3});
  CHECK(cross_entropy_loss(uni, {3}, kPadId, 0.0).item() == doctest::Approx(std::log(4.0)));

  // appending pad targets leaves the loss unchanged
  Rng rng(43);
  Tensor l1 = random_param({2, 5}, rng);
  std::vector<Real> padded(l1.values->begin(), l1.values->end());
  padded.insert(padded.end(), {9, 9, 9, 9, 9});
  Tensor l2 = Tensor::from({3, 5}, padded);
  const Real a = cross_entropy_loss(l1, {0, 4}, kPadId, 0.1).item();
  const Real b = cross_entropy_loss(l2, {0, 4, kPadId}, kPadId, 0.1).item();
  CHECK(a == b);

  CHECK_THROWS_AS(cross_entropy_loss(l1, {kPadId, kPadId}, kPadId, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy_loss(l1, {0}, kPadId, 0.0), std::invalid_argument);
}

TEST_CASE("cross_entropy_loss gradient with and without smoothing") {
  Rng rng(47);
  Tensor logits = random_param({4, 6}, rng, -2, 2);
  std::vector<int> tgt = {1, kPadId, 5, 0};
  for (Real eps : {0.0, 0.1}) {
    auto fwd = [&] { return cross_entropy_loss(logits, tgt, kPadId, eps); };
    CHECK(max_grad_check_err(fwd, {&logits}) < 1e-6);
  }
}

TEST_CASE("backward product rule and unused parameters") {
  Tensor x = Tensor::param({1}, {2});
  Tensor y = Tensor::param({1}, {3});
  Tensor unused = Tensor::param({2}, {1, 1});
  Tape tape;
  {
    Recording rec(tape);
    Tensor z = mul(x, y);
    tape.backward(z);
  }
  CHECK((*x.grad)[0] == doctest::Approx(3.0));
  CHECK((*y.grad)[0] == doctest::Approx(2.0));
  CHECK((*unused.grad)[0] == 0.0);
  CHECK((*unused.grad)[1] == 0.0);
}

TEST_CASE("backward twice without zeroing doubles grads exactly") {
  Rng rng(53);
  Tensor w = random_param({3, 3}, rng);
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tape tape;
  Tensor loss;
  {
    Recording rec(tape);
    loss = sum(matmul(x, w));
  }
  tape.backward(loss);
  std::vector<Real> once = *w.grad;
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK((*w.grad)[i] == 2.0 * once[i]);

  zero_grads({&w});
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK((*w.grad)[i] == once[i]);
}

TEST_CASE("backward rejects non-scalar and unrecorded losses") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tape tape;
  {
    Recording rec(tape);
    Tensor y = scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  Tensor stray = Tensor::scalar(1.0);
  CHECK_THROWS_AS(ape::backward(stray), std::invalid_argument);
}

TEST_CASE("no recording outside a Recording scope") {
  Tensor x = Tensor::param({2}, {1, 2});
  Tensor y = scale(x, 3.0);
  CHECK(y.node == -1);
  CHECK(y.grad == nullptr);
}
