#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "arf/errors.hpp"

namespace arf {

// Dense 64-bit vector. Every numeric carrier in the library (raw features,
// embeddings, bias blocks) is a Vector.
using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  void set_row(std::size_t r, std::span<const double> v);
  void append_row(std::span<const double> v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& m, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Unit vector in the direction of v. Throws ZeroVectorError when
// ||v|| <= 1e-12.
Vector l2_normalize(std::span<const double> v);

// log(sum(exp(x))) with max subtraction.
double log_sum_exp(std::span<const double> x);

// x - log_sum_exp(x). Throws InvalidArgumentError on empty or non-finite input.
Vector stable_log_softmax(std::span<const double> x);

bool all_finite(std::span<const double> v);

// Seeded pseudo-random stream. This is part of the on-disk contract: every
// artifact the library produces is a function of these exact sequences.
//
//   state seeding: splitmix64 applied four times to the 64-bit seed,
//       z = (s += 0x9e3779b97f4a7c15);
//       z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9;
//       z = (z ^ (z >> 27)) * 0x94d049bb133111eb;
//       out = z ^ (z >> 31)
//   state update (xoshiro256**):
//       result = rotl(s1 * 5, 7) * 9;
//       t = s1 << 17;
//       s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3;
//       s2 ^= t; s3 = rotl(s3, 45);
//   uniform(): (next_u64() >> 11) * 2^-53, in [0, 1)
//   gaussian(): Box-Muller on two fresh words a, b:
//       u1 = ((a >> 11) + 1) * 2^-53 in (0, 1],  u2 = (b >> 11) * 2^-53,
//       r = sqrt(-2 ln u1),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2);
//     z0 is returned first, z1 is cached and returned by the next call.
//   uniform_index(n): rejection sampling on next_u64() against the largest
//     multiple of n below 2^64, then modulo n.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();
  double gaussian();
  std::uint64_t uniform_index(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Standard-normal draws from seed.
inline RandomStream gaussian_stream(std::uint64_t seed) { return RandomStream(seed); }

// Independent child seed for a named sub-stream: splitmix64 finalizer of
// seed + (stream + 1) * 0x9e3779b97f4a7c15.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Fisher-Yates from the back, j = uniform_index(i + 1).
template <typename T>
void shuffle(std::vector<T>& items, RandomStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

Vector gaussian_vector(RandomStream& rng, std::size_t n, double scale = 1.0);

}  // namespace arf
