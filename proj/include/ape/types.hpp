#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ape {

// Scalar type for all tensor math. double keeps finite-difference gradient
// checks meaningful; switch to float for faster, lower-precision training.
using Real = double;

using Shape = std::vector<int>;

// Reserved vocabulary ids, fixed ahead of any learned BPE symbols.
inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumSpecialIds = 5;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One (src, mt, pe) training/eval item as token-id sequences.
struct TripletExample {
  std::vector<int> src;
  std::vector<int> mt;
  std::vector<int> pe;
};

// Deterministic RNG wrapper. std::distributions are implementation-defined,
// so uniform/bernoulli draws are derived from raw engine output to keep
// results bit-identical across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // [0, n)
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

template <typename T>
void fisher_yates_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ape
