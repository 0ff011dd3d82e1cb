#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "arf/numerics.hpp"

namespace arf {

enum class Modality { image, text };

std::string_view to_string(Modality m);

// One tower: raw -> W2 tanh(W1 raw + b1) + b2 -> unit sphere.
struct EncoderParams {
  Matrix w1;  // hidden x input_dim
  Vector b1;  // hidden
  Matrix w2;  // embed_dim x hidden
  Vector b2;  // embed_dim

  std::size_t input_dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }
  std::size_t embed_dim() const noexcept { return w2.rows(); }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Image tower f, text tower g and the contrastive temperature tau = exp(log_tau).
struct DualEncoderParams {
  EncoderParams image;
  EncoderParams text;
  double log_tau = 0.0;

  double tau() const;
  const EncoderParams& tower(Modality m) const { return m == Modality::image ? image : text; }
  EncoderParams& tower(Modality m) { return m == Modality::image ? image : text; }

  friend bool operator==(const DualEncoderParams&, const DualEncoderParams&) = default;
};

// Gradients share the parameter layout; log_tau holds dL/dlog_tau.
using ParamGrads = DualEncoderParams;

struct InputDims {
  std::size_t image = 0;
  std::size_t text = 0;
};

inline constexpr double kDefaultInitTau = 0.07;

// Gaussian weights with scale 1/sqrt(fan_in) drawn from gaussian_stream(seed)
// in the order image.w1, image.w2, text.w1, text.w2; zero biases.
DualEncoderParams init_params(std::uint64_t seed, InputDims input_dims, std::size_t hidden,
                              std::size_t embed_dim, double init_tau = kDefaultInitTau);

// Throws DimensionError / InvalidArgumentError when the invariants of the
// parameter set do not hold.
void validate(const DualEncoderParams& params);

// Zero-filled copy with identical shapes.
ParamGrads zeros_like(const DualEncoderParams& params);

// Flat views over every parameter block, in the fixed order
// image.{w1,b1,w2,b2}, text.{w1,b1,w2,b2}, log_tau.
std::vector<std::span<double>> parameter_blocks(DualEncoderParams& params);
std::vector<std::span<const double>> parameter_blocks(const DualEncoderParams& params);
std::size_t parameter_count(const DualEncoderParams& params);

// Intermediate values of one forward pass, kept for backpropagation.
struct EncoderTrace {
  Vector hidden;     // tanh(W1 raw + b1)
  Vector unnormed;   // W2 hidden + b2
  double norm = 0.0; // ||unnormed||
  Vector embedding;  // unnormed / norm
};

EncoderTrace encode_trace(const EncoderParams& tower, std::span<const double> raw);

// Unit embedding of raw under the requested tower.
Vector encode(const DualEncoderParams& params, Modality modality, std::span<const double> raw);

// Embeds every row of raw; row i of the result is encode(raw.row(i)).
Matrix encode_rows(const DualEncoderParams& params, Modality modality, const Matrix& raw);

// Gradient of (grad_embedding . embedding) with respect to the tower's parameters.
EncoderParams encoder_backward(const DualEncoderParams& params, Modality modality,
                               std::span<const double> raw, std::span<const double> grad_embedding);

// Same as encoder_backward but adds the result into the matching tower of grads.
void accumulate_encoder_backward(const DualEncoderParams& params, Modality modality,
                                 std::span<const double> raw,
                                 std::span<const double> grad_embedding, ParamGrads& grads);

// As above, reusing the forward trace of raw instead of recomputing it.
void accumulate_encoder_backward(const DualEncoderParams& params, Modality modality,
                                 std::span<const double> raw, const EncoderTrace& trace,
                                 std::span<const double> grad_embedding, ParamGrads& grads);

}  // namespace arf
