// Independent oracles and fixtures shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "arf/anchors.hpp"
#include "arf/contrastive.hpp"
#include "arf/numerics.hpp"

namespace arf::test {

inline Matrix random_unit_rows(RandomStream& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) m.set_row(r, l2_normalize(gaussian_vector(rng, cols)));
  return m;
}

// Softmax cross-entropy written out directly with long double, no shared code
// with the library's log-softmax.
inline double oracle_contrastive_loss(const Matrix& f, const Matrix& g, double tau) {
  const std::size_t b = f.rows();
  std::vector<std::vector<long double>> s(b, std::vector<long double>(b));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < f.cols(); ++k) acc += (long double)f(i, k) * g(j, k);
      s[i][j] = acc / tau;
    }
  long double rows = 0, cols = 0;
  for (std::size_t i = 0; i < b; ++i) {
    long double zr = 0, zc = 0;
    for (std::size_t j = 0; j < b; ++j) {
      zr += std::exp(s[i][j]);
      zc += std::exp(s[j][i]);
    }
    rows += std::log(zr) - s[i][i];
    cols += std::log(zc) - s[i][i];
  }
  return static_cast<double>(rows / b + cols / b);
}

// Brute force: score every candidate, then pick k times the best remaining by
// (highest score, lowest id).
inline std::vector<SampleId> oracle_top_k(const std::vector<double>& scores,
                                          const std::vector<SampleId>& ids, std::size_t k) {
  std::vector<bool> used(scores.size(), false);
  std::vector<SampleId> out;
  for (std::size_t pick = 0; pick < k; ++pick) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (used[i]) continue;
      if (best == scores.size() || scores[i] > scores[best] ||
          (scores[i] == scores[best] && ids[i] < ids[best]))
        best = i;
    }
    used[best] = true;
    out.push_back(ids[best]);
  }
  return out;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("arf_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace arf::test
