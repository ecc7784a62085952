#include "ape/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ape {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("non-positive dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(const Shape& shape) {
  Tensor t;
  t.shape = shape;
  t.values = std::make_shared<std::vector<Real>>(shape_numel(shape), 0.0);
  return t;
}

Tensor Tensor::full(const Shape& shape, Real v) {
  Tensor t = zeros(shape);
  std::fill(t.values->begin(), t.values->end(), v);
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> data) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape = shape;
  t.values = std::make_shared<std::vector<Real>>(std::move(data));
  return t;
}

Tensor Tensor::scalar(Real v) { return from({1}, {v}); }

Tensor Tensor::param(const Shape& shape, std::vector<Real> data) {
  Tensor t = from(shape, std::move(data));
  t.grad = std::make_shared<std::vector<Real>>(t.numel(), 0.0);
  return t;
}

Real Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape));
  return (*values)[0];
}

Real& Tensor::at(int i, int j) {
  return (*values)[static_cast<std::size_t>(i) * dim(rank() - 1) + j];
}
Real Tensor::at(int i, int j) const {
  return (*values)[static_cast<std::size_t>(i) * dim(rank() - 1) + j];
}
Real& Tensor::at(int i, int j, int k) {
  return (*values)[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
}
Real Tensor::at(int i, int j, int k) const {
  return (*values)[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

// ---- tape ----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

Recording::Recording(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Recording::~Recording() { g_active_tape = prev_; }

void Tape::stage(Tensor& out) {
  if (staged_) throw std::logic_error("tape stage() without matching push()");
  out.grad = std::make_shared<std::vector<Real>>(out.numel(), 0.0);
  out.node = static_cast<int>(nodes_.size());
  out.tape = this;
  out_grads_.push_back(out.grad);
  staged_ = true;
}

void Tape::push(const char* op, std::function<void()> pull) {
  if (!staged_) throw std::logic_error("tape push() without stage()");
  nodes_.push_back(Node{op, std::move(pull)});
  staged_ = false;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward expects a scalar loss, got " + shape_str(loss.shape));
  if (loss.tape != this || loss.node < 0)
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  for (auto& g : out_grads_) std::fill(g->begin(), g->end(), 0.0);
  (*loss.grad)[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) nodes_[static_cast<std::size_t>(i)].pull();
}

void backward(const Tensor& loss) {
  if (!loss.tape) throw std::invalid_argument("backward: loss has no computation record");
  loss.tape->backward(loss);
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* p : params) p->zero_grad();
}

// ---- gemm kernels ----------------------------------------------------------
// All three accumulate into C. Parameter-gradient reductions must iterate the
// position (row) index outermost so that accumulation order is identical
// whether a batch is processed whole or as consecutive micro-batches.

namespace {

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<std::size_t>(i) * k;
    Real* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const Real aip = arow[p];
      const Real* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<std::size_t>(i) * k;
    Real* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* brow = b + static_cast<std::size_t>(j) * k;
      Real s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N], k (position) outermost
void gemm_tn(const Real* a, const Real* b, Real* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const Real* arow = a + static_cast<std::size_t>(p) * m;
    const Real* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const Real aip = arow[i];
      Real* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

std::size_t tail_product(const Shape& s, std::size_t from) {
  std::size_t p = 1;
  for (std::size_t i = from; i < s.size(); ++i) p *= static_cast<std::size_t>(s[i]);
  return p;
}

}  // namespace

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() >= 2 && b.rank() == 2) {
    const int k = a.dim(a.rank() - 1);
    if (k != b.dim(0))
      throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a.shape) + " * " +
                                  shape_str(b.shape));
    const int n = b.dim(1);
    const int rows = static_cast<int>(a.numel()) / k;
    Shape out_shape = a.shape;
    out_shape.back() = n;
    Tensor out = Tensor::zeros(out_shape);
    gemm_nn(a.values->data(), b.values->data(), out.values->data(), rows, k, n);
    if (Tape* t = Tape::active()) {
      t->stage(out);
      auto go = out.grad;
      auto av = a.values, bv = b.values;
      auto ga = a.grad, gb = b.grad;
      t->push("matmul", [=] {
        if (ga) gemm_nt(go->data(), bv->data(), ga->data(), rows, n, k);
        if (gb) gemm_tn(av->data(), go->data(), gb->data(), k, rows, n);
      });
    }
    return out;
  }
  if (a.rank() == 3 && b.rank() == 3) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
      throw std::invalid_argument("matmul: incompatible batched shapes " + shape_str(a.shape) +
                                  " * " + shape_str(b.shape));
    const int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor out = Tensor::zeros({bs, m, n});
    for (int i = 0; i < bs; ++i)
      gemm_nn(a.values->data() + static_cast<std::size_t>(i) * m * k,
              b.values->data() + static_cast<std::size_t>(i) * k * n,
              out.values->data() + static_cast<std::size_t>(i) * m * n, m, k, n);
    if (Tape* t = Tape::active()) {
      t->stage(out);
      auto go = out.grad;
      auto av = a.values, bv = b.values;
      auto ga = a.grad, gb = b.grad;
      t->push("matmul", [=] {
        for (int i = 0; i < bs; ++i) {
          const std::size_t ao = static_cast<std::size_t>(i) * m * k;
          const std::size_t bo = static_cast<std::size_t>(i) * k * n;
          const std::size_t co = static_cast<std::size_t>(i) * m * n;
          if (ga) gemm_nt(go->data() + co, bv->data() + bo, ga->data() + ao, m, n, k);
          if (gb) gemm_tn(av->data() + ao, go->data() + co, gb->data() + bo, k, m, n);
        }
      });
    }
    return out;
  }
  throw std::invalid_argument("matmul: unsupported ranks " + shape_str(a.shape) + " * " +
                              shape_str(b.shape));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() >= 2 && b.rank() == 2) {
    const int k = a.dim(a.rank() - 1);
    if (k != b.dim(1))
      throw std::invalid_argument("matmul_nt: inner dims differ, " + shape_str(a.shape) + " * " +
                                  shape_str(b.shape) + "^T");
    const int n = b.dim(0);
    const int rows = static_cast<int>(a.numel()) / k;
    Shape out_shape = a.shape;
    out_shape.back() = n;
    Tensor out = Tensor::zeros(out_shape);
    gemm_nt(a.values->data(), b.values->data(), out.values->data(), rows, k, n);
    if (Tape* t = Tape::active()) {
      t->stage(out);
      auto go = out.grad;
      auto av = a.values, bv = b.values;
      auto ga = a.grad, gb = b.grad;
      t->push("matmul_nt", [=] {
        if (ga) gemm_nn(go->data(), bv->data(), ga->data(), rows, n, k);
        if (gb) gemm_tn(go->data(), av->data(), gb->data(), n, rows, k);
      });
    }
    return out;
  }
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("matmul_nt: incompatible shapes " + shape_str(a.shape) + " * " +
                                shape_str(b.shape) + "^T");
  const int bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  Tensor out = Tensor::zeros({bs, m, n});
  for (int i = 0; i < bs; ++i)
    gemm_nt(a.values->data() + static_cast<std::size_t>(i) * m * k,
            b.values->data() + static_cast<std::size_t>(i) * n * k,
            out.values->data() + static_cast<std::size_t>(i) * m * n, m, k, n);
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto av = a.values, bv = b.values;
    auto ga = a.grad, gb = b.grad;
    t->push("matmul_nt", [=] {
      for (int i = 0; i < bs; ++i) {
        const std::size_t ao = static_cast<std::size_t>(i) * m * k;
        const std::size_t bo = static_cast<std::size_t>(i) * n * k;
        const std::size_t co = static_cast<std::size_t>(i) * m * n;
        if (ga) gemm_nn(go->data() + co, bv->data() + bo, ga->data() + ao, m, n, k);
        if (gb) gemm_tn(go->data() + co, av->data() + ao, gb->data() + bo, n, m, k);
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: " + shape_str(x.shape) + " -> " + shape_str(shape) +
                                " changes element count");
  Tensor out = x;
  out.shape = shape;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] + (*b.values)[i];
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto ga = a.grad, gb = b.grad;
    t->push("add", [=] {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * (*b.values)[i];
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto av = a.values, bv = b.values;
    auto ga = a.grad, gb = b.grad;
    t->push("mul", [=] {
      if (ga)
        for (std::size_t i = 0; i < n; ++i) (*ga)[i] += (*go)[i] * (*bv)[i];
      if (gb)
        for (std::size_t i = 0; i < n; ++i) (*gb)[i] += (*go)[i] * (*av)[i];
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1 || x.rank() < 1 || x.dim(x.rank() - 1) != b.dim(0))
    throw std::invalid_argument("add_bias: " + shape_str(x.shape) + " + " + shape_str(b.shape));
  const int d = b.dim(0);
  const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j)
      (*out.values)[r * d + j] = (*x.values)[r * d + j] + (*b.values)[j];
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad, gb = b.grad;
    t->push("add_bias", [=] {
      if (gx)
        for (std::size_t i = 0; i < rows * d; ++i) (*gx)[i] += (*go)[i];
      if (gb)
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < d; ++j) (*gb)[j] += (*go)[r * d + j];
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real s) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*x.values)[i] * s;
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad;
    t->push("scale", [=] {
      if (gx)
        for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * s;
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = std::max<Real>(0.0, (*x.values)[i]);
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto xv = x.values;
    auto gx = x.grad;
    t->push("relu", [=] {
      if (gx)
        for (std::size_t i = 0; i < n; ++i)
          if ((*xv)[i] > 0.0) (*gx)[i] += (*go)[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Real s = 0.0;
  for (Real v : *x.values) s += v;
  Tensor out = Tensor::scalar(s);
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad;
    const std::size_t n = x.numel();
    t->push("sum", [=] {
      if (gx) {
        const Real g = (*go)[0];
        for (std::size_t i = 0; i < n; ++i) (*gx)[i] += g;
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(x.shape));
  const std::size_t n = static_cast<std::size_t>(x.dim(axis));
  const std::size_t inner = tail_product(x.shape, static_cast<std::size_t>(axis) + 1);
  const std::size_t outer = x.numel() / (n * inner);
  Tensor out = Tensor::zeros(x.shape);
  const Real* xv = x.values->data();
  Real* ov = out.values->data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Real mx = xv[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[base + i * inner]);
      Real denom = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real e = std::exp(xv[base + i * inner] - mx);
        ov[base + i * inner] = e;
        denom += e;
      }
      const Real inv = 1.0 / denom;
      for (std::size_t i = 0; i < n; ++i) ov[base + i * inner] *= inv;
    }
  }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto yv = out.values;
    auto gx = x.grad;
    t->push("softmax", [=] {
      if (!gx) return;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          Real dot = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            dot += (*go)[base + i * inner] * (*yv)[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ix = base + i * inner;
            (*gx)[ix] += (*yv)[ix] * ((*go)[ix] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const int d = x.dim(x.rank() - 1);
  if (gain.shape != Shape{d} || bias.shape != Shape{d})
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                                shape_str(gain.shape) + " and " + shape_str(bias.shape));
  const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
  Tensor out = Tensor::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto invstd = std::make_shared<std::vector<Real>>(rows);
  const Real* xv = x.values->data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    Real mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xv[base + j];
    mean /= d;
    Real var = 0.0;
    for (int j = 0; j < d; ++j) {
      const Real c = xv[base + j] - mean;
      var += c * c;
    }
    var /= d;
    const Real is = 1.0 / std::sqrt(var + eps);
    (*invstd)[r] = is;
    for (int j = 0; j < d; ++j) {
      const Real xh = (xv[base + j] - mean) * is;
      (*xhat)[base + j] = xh;
      (*out.values)[base + j] = xh * (*gain.values)[j] + (*bias.values)[j];
    }
  }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gv = gain.values;
    auto gx = x.grad, gg = gain.grad, gb = bias.grad;
    t->push("layer_norm", [=] {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * d;
        if (gg || gb) {
          for (int j = 0; j < d; ++j) {
            if (gg) (*gg)[j] += (*go)[base + j] * (*xhat)[base + j];
            if (gb) (*gb)[j] += (*go)[base + j];
          }
        }
        if (gx) {
          Real sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int j = 0; j < d; ++j) {
            const Real dxh = (*go)[base + j] * (*gv)[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * (*xhat)[base + j];
          }
          const Real is = (*invstd)[r];
          for (int j = 0; j < d; ++j) {
            const Real dxh = (*go)[base + j] * (*gv)[j];
            (*gx)[base + j] +=
                is * (dxh - sum_dxh / d - (*xhat)[base + j] * (sum_dxh_xh / d));
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, Real rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!train || rate == 0.0) return x;
  const Real keep_scale = 1.0 / (1.0 - rate);
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<Real>>(n);
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const Real m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    (*mask)[i] = m;
    (*out.values)[i] = (*x.values)[i] * m;
  }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad;
    t->push("dropout", [=] {
      if (gx)
        for (std::size_t i = 0; i < n; ++i) (*gx)[i] += (*go)[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor embed_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("embed_lookup: table must be rank 2, got " + shape_str(table.shape));
  const int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embed_lookup: id " + std::to_string(id) +
                                  " outside vocabulary of size " + std::to_string(v));
  const int n = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i) {
    const Real* row = table.values->data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
    std::copy(row, row + d, out.values->data() + static_cast<std::size_t>(i) * d);
  }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gt = table.grad;
    t->push("embed_lookup", [=, ids = ids] {
      if (!gt) return;
      for (int i = 0; i < n; ++i) {
        Real* dst = gt->data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d;
        const Real* src = go->data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor split_heads(const Tensor& x, int h) {
  if (x.rank() != 3 || x.dim(2) % h != 0)
    throw std::invalid_argument("split_heads: need [B,L,d] with d divisible by h=" +
                                std::to_string(h) + ", got " + shape_str(x.shape));
  const int b = x.dim(0), l = x.dim(1), d = x.dim(2), dk = d / h;
  Tensor out = Tensor::zeros({b * h, l, dk});
  const Real* xv = x.values->data();
  Real* ov = out.values->data();
  for (int bi = 0; bi < b; ++bi)
    for (int hi = 0; hi < h; ++hi)
      for (int li = 0; li < l; ++li) {
        const std::size_t src = (static_cast<std::size_t>(bi) * l + li) * d + static_cast<std::size_t>(hi) * dk;
        const std::size_t dst = ((static_cast<std::size_t>(bi) * h + hi) * l + li) * dk;
        std::copy(xv + src, xv + src + dk, ov + dst);
      }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad;
    t->push("split_heads", [=] {
      if (!gx) return;
      for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < h; ++hi)
          for (int li = 0; li < l; ++li) {
            const std::size_t src = (static_cast<std::size_t>(bi) * l + li) * d + static_cast<std::size_t>(hi) * dk;
            const std::size_t dst = ((static_cast<std::size_t>(bi) * h + hi) * l + li) * dk;
            for (int j = 0; j < dk; ++j) (*gx)[src + j] += (*go)[dst + j];
          }
    });
  }
  return out;
}

Tensor merge_heads(const Tensor& x, int h) {
  if (x.rank() != 3 || x.dim(0) % h != 0)
    throw std::invalid_argument("merge_heads: need [B*h,L,dk], got " + shape_str(x.shape));
  const int b = x.dim(0) / h, l = x.dim(1), dk = x.dim(2), d = dk * h;
  Tensor out = Tensor::zeros({b, l, d});
  const Real* xv = x.values->data();
  Real* ov = out.values->data();
  for (int bi = 0; bi < b; ++bi)
    for (int hi = 0; hi < h; ++hi)
      for (int li = 0; li < l; ++li) {
        const std::size_t src = ((static_cast<std::size_t>(bi) * h + hi) * l + li) * dk;
        const std::size_t dst = (static_cast<std::size_t>(bi) * l + li) * d + static_cast<std::size_t>(hi) * dk;
        std::copy(xv + src, xv + src + dk, ov + dst);
      }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gx = x.grad;
    t->push("merge_heads", [=] {
      if (!gx) return;
      for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < h; ++hi)
          for (int li = 0; li < l; ++li) {
            const std::size_t src = ((static_cast<std::size_t>(bi) * h + hi) * l + li) * dk;
            const std::size_t dst = (static_cast<std::size_t>(bi) * l + li) * d + static_cast<std::size_t>(hi) * dk;
            for (int j = 0; j < dk; ++j) (*gx)[src + j] += (*go)[dst + j];
          }
    });
  }
  return out;
}

Tensor add_attn_mask(const Tensor& scores, const Tensor& mask, int h) {
  if (scores.rank() != 3 || mask.rank() != 3 || scores.dim(0) != mask.dim(0) * h ||
      scores.dim(1) != mask.dim(1) || scores.dim(2) != mask.dim(2))
    throw std::invalid_argument("add_attn_mask: scores " + shape_str(scores.shape) +
                                " incompatible with mask " + shape_str(mask.shape) + " and h=" +
                                std::to_string(h));
  const int bh = scores.dim(0), lq = scores.dim(1), lk = scores.dim(2);
  const std::size_t plane = static_cast<std::size_t>(lq) * lk;
  Tensor out = Tensor::zeros(scores.shape);
  for (int i = 0; i < bh; ++i) {
    const Real* sv = scores.values->data() + i * plane;
    const Real* mv = mask.values->data() + static_cast<std::size_t>(i / h) * plane;
    Real* ov = out.values->data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) ov[j] = sv[j] + mv[j];
  }
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gs = scores.grad;
    const std::size_t n = out.numel();
    t->push("add_attn_mask", [=] {
      if (gs)
        for (std::size_t i = 0; i < n; ++i) (*gs)[i] += (*go)[i];
    });
  }
  return out;
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& targets, int pad_id,
                          Real label_smoothing, long norm_count) {
  if (logits.rank() < 2)
    throw std::invalid_argument("cross_entropy_loss: logits must have rank >= 2, got " +
                                shape_str(logits.shape));
  const int v = logits.dim(logits.rank() - 1);
  const std::size_t rows = logits.numel() / static_cast<std::size_t>(v);
  if (targets.size() != rows)
    throw std::invalid_argument("cross_entropy_loss: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " positions");
  long real = 0;
  for (int y : targets) {
    if (y != pad_id && (y < 0 || y >= v))
      throw std::invalid_argument("cross_entropy_loss: target id " + std::to_string(y) +
                                  " outside vocabulary of size " + std::to_string(v));
    if (y != pad_id) ++real;
  }
  if (real == 0) throw std::invalid_argument("cross_entropy_loss: all target positions are pad");
  const Real divisor = static_cast<Real>(norm_count > 0 ? norm_count : real);
  const Real eps = label_smoothing;
  const Real uni = eps / v;

  auto probs = std::make_shared<std::vector<Real>>(logits.numel(), 0.0);
  const Real* lv = logits.values->data();
  Real total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = targets[r];
    if (y == pad_id) continue;
    const std::size_t base = r * v;
    Real mx = lv[base];
    for (int j = 1; j < v; ++j) mx = std::max(mx, lv[base + j]);
    Real denom = 0.0, lsum = 0.0;
    for (int j = 0; j < v; ++j) {
      const Real e = std::exp(lv[base + j] - mx);
      (*probs)[base + j] = e;
      denom += e;
      lsum += lv[base + j];
    }
    const Real lse = mx + std::log(denom);
    const Real inv = 1.0 / denom;
    for (int j = 0; j < v; ++j) (*probs)[base + j] *= inv;
    total += lse - (1.0 - eps) * lv[base + y] - uni * lsum;
  }
  Tensor out = Tensor::scalar(total / divisor);
  if (Tape* t = Tape::active()) {
    t->stage(out);
    auto go = out.grad;
    auto gl = logits.grad;
    t->push("cross_entropy_loss", [=, targets = targets] {
      if (!gl) return;
      const Real g = (*go)[0] / divisor;
      for (std::size_t r = 0; r < rows; ++r) {
        const int y = targets[r];
        if (y == pad_id) continue;
        const std::size_t base = r * v;
        for (int j = 0; j < v; ++j) {
          const Real q = uni + (j == y ? (1.0 - eps) : 0.0);
          (*gl)[base + j] += g * ((*probs)[base + j] - q);
        }
      }
    });
  }
  return out;
}

}  // namespace ape
