#include "arf/contrastive.hpp"

#include <cmath>
#include <string>

namespace arf {

namespace {

void check_batch(const PairBatch& batch, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgumentError("tau must be positive");
  const auto& f = batch.image_embeddings;
  const auto& g = batch.text_embeddings;
  if (f.rows() != g.rows()) {
    throw DimensionError("pair batch row mismatch: " + std::to_string(f.rows()) + " images vs " +
                         std::to_string(g.rows()) + " texts");
  }
  if (f.rows() == 0) throw DimensionError("pair batch is empty");
  if (f.cols() != g.cols()) throw DimensionError("pair batch embedding width mismatch");
}

Matrix similarity(const PairBatch& batch, double tau) {
  const auto& f = batch.image_embeddings;
  const auto& g = batch.text_embeddings;
  const std::size_t b = f.rows();
  Matrix s(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s(i, j) = dot(f.row(i), g.row(j)) / tau;
  return s;
}

// Row-wise log-softmax of s and of its transpose (columns of s).
struct LogProbs {
  Matrix rows;  // rows(i, j) = log softmax over j of s(i, .)
  Matrix cols;  // cols(i, j) = log softmax over i of s(., j), stored as (i, j)
};

LogProbs log_probs(const Matrix& s) {
  const std::size_t b = s.rows();
  LogProbs lp{Matrix(b, b), Matrix(b, b)};
  for (std::size_t i = 0; i < b; ++i) lp.rows.set_row(i, stable_log_softmax(s.row(i)));
  Vector col(b);
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) col[i] = s(i, j);
    const Vector l = stable_log_softmax(col);
    for (std::size_t i = 0; i < b; ++i) lp.cols(i, j) = l[i];
  }
  return lp;
}

LossValue loss_from(const LogProbs& lp) {
  const std::size_t b = lp.rows.rows();
  LossValue v;
  for (std::size_t i = 0; i < b; ++i) {
    v.image_to_text -= lp.rows(i, i);
    v.text_to_image -= lp.cols(i, i);
  }
  v.image_to_text /= static_cast<double>(b);
  v.text_to_image /= static_cast<double>(b);
  v.total = v.image_to_text + v.text_to_image;
  return v;
}

ContrastiveGrads grads_from(const PairBatch& batch, const Matrix& s, const LogProbs& lp,
                            double tau) {
  const auto& f = batch.image_embeddings;
  const auto& g = batch.text_embeddings;
  const std::size_t b = f.rows();
  const std::size_t d = f.cols();
  const double inv_b = 1.0 / static_cast<double>(b);

  Matrix ds(b, b);
  double d_log_tau = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      const double p = std::exp(lp.rows(i, j));
      const double q = std::exp(lp.cols(i, j));
      ds(i, j) = ((p - target) + (q - target)) * inv_b;
      d_log_tau -= ds(i, j) * s(i, j);
    }
  }

  ContrastiveGrads out{Matrix(b, d), Matrix(b, d), d_log_tau};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double w = ds(i, j) / tau;
      auto gi = out.d_image.row(i);
      auto gj = out.d_text.row(j);
      auto fi = f.row(i);
      auto tj = g.row(j);
      for (std::size_t k = 0; k < d; ++k) {
        gi[k] += w * tj[k];
        gj[k] += w * fi[k];
      }
    }
  }
  return out;
}

}  // namespace

void validate_unit_rows(const PairBatch& batch, double tol) {
  check_batch(batch, 1.0);
  for (const Matrix* m : {&batch.image_embeddings, &batch.text_embeddings}) {
    for (std::size_t i = 0; i < m->rows(); ++i) {
      if (std::abs(l2_norm(m->row(i)) - 1.0) > tol) {
        throw InvalidArgumentError("pair batch row " + std::to_string(i) + " is not unit norm");
      }
    }
  }
}

LossValue contrastive_loss(const PairBatch& batch, double tau) {
  check_batch(batch, tau);
  return loss_from(log_probs(similarity(batch, tau)));
}

ContrastiveGrads contrastive_grads(const PairBatch& batch, double tau) {
  return contrastive_loss_and_grads(batch, tau).grads;
}

LossAndGrads contrastive_loss_and_grads(const PairBatch& batch, double tau) {
  check_batch(batch, tau);
  const Matrix s = similarity(batch, tau);
  const LogProbs lp = log_probs(s);
  return {loss_from(lp), grads_from(batch, s, lp, tau)};
}

}  // namespace arf
