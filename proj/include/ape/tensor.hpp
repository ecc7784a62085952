#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ape/types.hpp"

namespace ape {

class Tape;

// Dense row-major tensor. Copies share storage; the struct itself is a cheap
// handle. `grad` is allocated for parameters (leaves) and for op outputs
// recorded on a tape; plain constants carry no grad.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<Real>> values;
  std::shared_ptr<std::vector<Real>> grad;
  int node = -1;          // producing node in `tape`, -1 for leaves/constants
  Tape* tape = nullptr;

  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Real v);
  static Tensor from(const Shape& shape, std::vector<Real> data);
  static Tensor scalar(Real v);
  // Leaf with grad storage: a trainable parameter.
  static Tensor param(const Shape& shape, std::vector<Real> data);

  std::size_t numel() const { return values ? values->size() : 0; }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }
  Real item() const;

  Real& at(int i) { return (*values)[static_cast<std::size_t>(i)]; }
  Real at(int i) const { return (*values)[static_cast<std::size_t>(i)]; }
  Real& at(int i, int j);
  Real at(int i, int j) const;
  Real& at(int i, int j, int k);
  Real at(int i, int j, int k) const;

  void zero_grad();
};

// Reverse-mode computation record. Nodes are appended in execution order, so
// every node's inputs precede it; backward() replays them in exact reverse
// order. Grad buffers of recorded outputs are reset at the start of each
// backward pass, while leaf (parameter) grads accumulate across calls.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);
  std::size_t num_nodes() const { return nodes_.size(); }

  static Tape* active();

  // Used by op implementations: stage() allocates the output's grad buffer
  // and assigns its node id, push() installs the matching pull closure.
  void stage(Tensor& out);
  void push(const char* op, std::function<void()> pull);

 private:
  struct Node {
    const char* op;
    std::function<void()> pull;
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<std::vector<Real>>> out_grads_;
  bool staged_ = false;

  friend class Recording;
};

// RAII scope that makes `tape` the active recording target on this thread.
class Recording {
 public:
  explicit Recording(Tape& tape);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape* prev_;
};

void backward(const Tensor& loss);
void zero_grads(const std::vector<Tensor*>& params);

// ---- ops ----------------------------------------------------------------

// a[..., i, k] * b[k, j] (weights, rank-2 rhs) or batched a[B, i, k] * b[B, k, j].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[..., i, k] * b[j, k]^T (rank-2 rhs) or batched a[B, i, k] * b[B, j, k]^T.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Metadata-only view: shares storage and grad with x.
Tensor reshape(const Tensor& x, const Shape& shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[..., d] + b[d]
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor scale(const Tensor& x, Real s);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Real eps = 1e-6);
// Inverted dropout: survivors scaled by 1/(1-rate) in training, identity in eval.
Tensor dropout(const Tensor& x, Real rate, bool train, Rng& rng);
// table[V, d] gathered by ids -> [n, d]; backward scatters into table rows.
Tensor embed_lookup(const Tensor& table, const std::vector<int>& ids);

// [B, L, d] -> [B*h, L, d/h] and back.
Tensor split_heads(const Tensor& x, int h);
Tensor merge_heads(const Tensor& x, int h);
// scores[B*h, Lq, Lk] + mask[B, Lq, Lk], mask broadcast over heads.
Tensor add_attn_mask(const Tensor& scores, const Tensor& mask, int h);

// Mean label-smoothed negative log-likelihood over non-pad target positions.
// logits: [..., vocab] flattened to [positions, vocab]; targets.size() must
// equal positions. norm_count > 0 overrides the divisor (used for exact
// gradient accumulation across micro-batches); default is the non-pad count.
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& targets,
                          int pad_id, Real label_smoothing,
                          long norm_count = -1);

}  // namespace ape
