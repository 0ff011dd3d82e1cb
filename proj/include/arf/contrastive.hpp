#pragma once

#include "arf/numerics.hpp"

namespace arf {

// B matched (image, text) embedding rows. Rows are expected to be unit norm;
// the loss itself does not renormalize, so finite-difference probes on raw
// embeddings remain meaningful.
struct PairBatch {
  Matrix image_embeddings;  // B x d
  Matrix text_embeddings;   // B x d

  std::size_t size() const noexcept { return image_embeddings.rows(); }
};

// Throws DimensionError unless both sides are B x d with B >= 1, and
// InvalidArgumentError if any row is off the unit sphere by more than tol.
void validate_unit_rows(const PairBatch& batch, double tol = 1e-9);

struct LossValue {
  double total = 0.0;
  double image_to_text = 0.0;
  double text_to_image = 0.0;
};

// Symmetric InfoNCE over S_ij = f_i . g_j / tau:
//   image_to_text = -1/B sum_i log softmax_row_i(S)[i]
//   text_to_image = -1/B sum_i log softmax_col_i(S)[i]
LossValue contrastive_loss(const PairBatch& batch, double tau);

struct ContrastiveGrads {
  Matrix d_image;          // dL/dF
  Matrix d_text;           // dL/dG
  double d_log_tau = 0.0;  // dL/dlog(tau) = -sum_ij dL/dS_ij S_ij
};

// With P = row-softmax(S), Q = column-softmax(S):
//   dL/dS = ((P - I) + (Q - I)) / B,  dL/dF = dL/dS G / tau,  dL/dG = dL/dS^T F / tau.
// Gradients are with respect to the embeddings as given; backpropagating
// through the normalization is the encoder's job.
ContrastiveGrads contrastive_grads(const PairBatch& batch, double tau);

struct LossAndGrads {
  LossValue loss;
  ContrastiveGrads grads;
};

// Single pass computing both; numerically identical to the two calls above.
LossAndGrads contrastive_loss_and_grads(const PairBatch& batch, double tau);

}  // namespace arf
