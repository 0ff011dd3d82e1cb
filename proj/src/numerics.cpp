#include "arf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace arf {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("matrix value count " + std::to_string(values_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

void Matrix::set_row(std::size_t r, std::span<const double> v) {
  if (v.size() != cols_) throw DimensionError("set_row: width mismatch");
  std::copy(v.begin(), v.end(), values_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

void Matrix::append_row(std::span<const double> v) {
  if (rows_ == 0 && cols_ == 0) cols_ = v.size();
  if (v.size() != cols_) throw DimensionError("append_row: width mismatch");
  values_.insert(values_.end(), v.begin(), v.end());
  ++rows_;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Vector matvec(const Matrix& m, std::span<const double> v) {
  if (m.cols() != v.size()) throw DimensionError("matvec: dimension mismatch");
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), v);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vector l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 1e-12)) throw ZeroVectorError("cannot normalize a vector with norm <= 1e-12");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw InvalidArgumentError("log_sum_exp of an empty vector");
  if (!all_finite(x)) throw InvalidArgumentError("log_sum_exp: non-finite input");
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double xi : x) s += std::exp(xi - m);
  return m + std::log(s);
}

Vector stable_log_softmax(std::span<const double> x) {
  const double lse = log_sum_exp(x);
  Vector out(x.begin(), x.end());
  for (double& v : out) v -= lse;
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t RandomStream::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv; }

double RandomStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * kTwoPow53Inv;
  const double u2 = static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

std::uint64_t RandomStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgumentError("uniform_index: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed + stream * 0x9e3779b97f4a7c15ULL;
  return splitmix64(s);
}

Vector gaussian_vector(RandomStream& rng, std::size_t n, double scale) {
  Vector v(n);
  for (double& x : v) x = scale * rng.gaussian();
  return v;
}

}  // namespace arf
