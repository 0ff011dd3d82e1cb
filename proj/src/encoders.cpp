#include "arf/encoders.hpp"

#include <cmath>
#include <string>

namespace arf {

std::string_view to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

double DualEncoderParams::tau() const { return std::exp(log_tau); }

namespace {

EncoderParams init_tower(RandomStream& rng, std::size_t input_dim, std::size_t hidden,
                         std::size_t embed_dim) {
  EncoderParams t;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  t.w1 = Matrix(hidden, input_dim, gaussian_vector(rng, hidden * input_dim, s1));
  t.b1 = Vector(hidden, 0.0);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  t.w2 = Matrix(embed_dim, hidden, gaussian_vector(rng, embed_dim * hidden, s2));
  t.b2 = Vector(embed_dim, 0.0);
  return t;
}

void validate_tower(const EncoderParams& t, std::string_view name) {
  const std::string n(name);
  if (t.input_dim() == 0 || t.hidden() == 0) throw DimensionError(n + " tower has an empty layer");
  if (t.embed_dim() < 2) throw DimensionError(n + " tower embed_dim must be >= 2");
  if (t.b1.size() != t.hidden()) throw DimensionError(n + " tower b1 size mismatch");
  if (t.w2.cols() != t.hidden()) throw DimensionError(n + " tower w2 width mismatch");
  if (t.b2.size() != t.embed_dim()) throw DimensionError(n + " tower b2 size mismatch");
  if (!all_finite(t.w1.values()) || !all_finite(t.b1) || !all_finite(t.w2.values()) ||
      !all_finite(t.b2)) {
    throw InvalidArgumentError(n + " tower has non-finite parameters");
  }
}

void check_raw(const EncoderParams& t, std::span<const double> raw, Modality m) {
  if (raw.size() != t.input_dim()) {
    throw DimensionError(std::string(to_string(m)) + " input has dim " +
                         std::to_string(raw.size()) + ", expected " +
                         std::to_string(t.input_dim()));
  }
}

void backward_into(const EncoderParams& tower, std::span<const double> raw,
                   const EncoderTrace& tr, std::span<const double> grad_embedding,
                   EncoderParams& out) {
  if (grad_embedding.size() != tower.embed_dim()) {
    throw DimensionError("grad_embedding dim does not match embed_dim");
  }
  const std::size_t d = tower.embed_dim();
  const std::size_t h = tower.hidden();

  // Normalization Jacobian: (I - e e^T) / ||u||.
  const double proj = dot(tr.embedding, grad_embedding);
  Vector grad_u(d);
  for (std::size_t i = 0; i < d; ++i)
    grad_u[i] = (grad_embedding[i] - tr.embedding[i] * proj) / tr.norm;

  Vector grad_pre(h, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double gi = grad_u[i];
    out.b2[i] += gi;
    auto w2_row = tower.w2.row(i);
    auto gw2_row = out.w2.row(i);
    for (std::size_t j = 0; j < h; ++j) {
      gw2_row[j] += gi * tr.hidden[j];
      grad_pre[j] += w2_row[j] * gi;
    }
  }
  for (std::size_t j = 0; j < h; ++j) {
    const double g = grad_pre[j] * (1.0 - tr.hidden[j] * tr.hidden[j]);
    out.b1[j] += g;
    auto gw1_row = out.w1.row(j);
    for (std::size_t k = 0; k < raw.size(); ++k) gw1_row[k] += g * raw[k];
  }
}

EncoderParams zero_tower_like(const EncoderParams& t) {
  return {Matrix(t.w1.rows(), t.w1.cols()), Vector(t.b1.size(), 0.0),
          Matrix(t.w2.rows(), t.w2.cols()), Vector(t.b2.size(), 0.0)};
}

}  // namespace

DualEncoderParams init_params(std::uint64_t seed, InputDims input_dims, std::size_t hidden,
                              std::size_t embed_dim, double init_tau) {
  if (input_dims.image == 0 || input_dims.text == 0 || hidden == 0) {
    throw DimensionError("init_params: dimensions must be positive");
  }
  if (embed_dim < 2) throw DimensionError("init_params: embed_dim must be >= 2");
  if (!(init_tau > 1e-4 && init_tau < 10.0)) {
    throw InvalidArgumentError("init_params: tau must lie in (1e-4, 10)");
  }
  RandomStream rng = gaussian_stream(seed);
  DualEncoderParams p;
  p.image = init_tower(rng, input_dims.image, hidden, embed_dim);
  p.text = init_tower(rng, input_dims.text, hidden, embed_dim);
  p.log_tau = std::log(init_tau);
  return p;
}

void validate(const DualEncoderParams& params) {
  validate_tower(params.image, "image");
  validate_tower(params.text, "text");
  if (params.image.embed_dim() != params.text.embed_dim()) {
    throw DimensionError("image and text towers disagree on embed_dim");
  }
  const double tau = params.tau();
  if (!(tau > 1e-4 && tau < 10.0)) throw InvalidArgumentError("tau must lie in (1e-4, 10)");
}

ParamGrads zeros_like(const DualEncoderParams& params) {
  return {zero_tower_like(params.image), zero_tower_like(params.text), 0.0};
}

std::vector<std::span<double>> parameter_blocks(DualEncoderParams& p) {
  return {p.image.w1.values(), p.image.b1, p.image.w2.values(), p.image.b2,
          p.text.w1.values(),  p.text.b1,  p.text.w2.values(),  p.text.b2,
          std::span<double>(&p.log_tau, 1)};
}

std::vector<std::span<const double>> parameter_blocks(const DualEncoderParams& p) {
  return {p.image.w1.values(), p.image.b1, p.image.w2.values(), p.image.b2,
          p.text.w1.values(),  p.text.b1,  p.text.w2.values(),  p.text.b2,
          std::span<const double>(&p.log_tau, 1)};
}

std::size_t parameter_count(const DualEncoderParams& params) {
  std::size_t n = 0;
  for (auto block : parameter_blocks(params)) n += block.size();
  return n;
}

EncoderTrace encode_trace(const EncoderParams& tower, std::span<const double> raw) {
  EncoderTrace tr;
  const std::size_t h = tower.hidden();
  const std::size_t d = tower.embed_dim();
  tr.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    auto w = tower.w1.row(j);
    double s = tower.b1[j];
    for (std::size_t k = 0; k < raw.size(); ++k) s += w[k] * raw[k];
    tr.hidden[j] = std::tanh(s);
  }
  tr.unnormed.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    auto w = tower.w2.row(i);
    double s = tower.b2[i];
    for (std::size_t j = 0; j < h; ++j) s += w[j] * tr.hidden[j];
    tr.unnormed[i] = s;
  }
  tr.norm = l2_norm(tr.unnormed);
  tr.embedding = l2_normalize(tr.unnormed);
  return tr;
}

Vector encode(const DualEncoderParams& params, Modality modality, std::span<const double> raw) {
  const EncoderParams& tower = params.tower(modality);
  check_raw(tower, raw, modality);
  return encode_trace(tower, raw).embedding;
}

Matrix encode_rows(const DualEncoderParams& params, Modality modality, const Matrix& raw) {
  Matrix out(raw.rows(), params.tower(modality).embed_dim());
  for (std::size_t i = 0; i < raw.rows(); ++i) out.set_row(i, encode(params, modality, raw.row(i)));
  return out;
}

EncoderParams encoder_backward(const DualEncoderParams& params, Modality modality,
                               std::span<const double> raw,
                               std::span<const double> grad_embedding) {
  const EncoderParams& tower = params.tower(modality);
  check_raw(tower, raw, modality);
  EncoderParams out = zero_tower_like(tower);
  backward_into(tower, raw, encode_trace(tower, raw), grad_embedding, out);
  return out;
}

void accumulate_encoder_backward(const DualEncoderParams& params, Modality modality,
                                 std::span<const double> raw,
                                 std::span<const double> grad_embedding, ParamGrads& grads) {
  const EncoderParams& tower = params.tower(modality);
  check_raw(tower, raw, modality);
  backward_into(tower, raw, encode_trace(tower, raw), grad_embedding, grads.tower(modality));
}

void accumulate_encoder_backward(const DualEncoderParams& params, Modality modality,
                                 std::span<const double> raw, const EncoderTrace& trace,
                                 std::span<const double> grad_embedding, ParamGrads& grads) {
  const EncoderParams& tower = params.tower(modality);
  check_raw(tower, raw, modality);
  backward_into(tower, raw, trace, grad_embedding, grads.tower(modality));
}

}  // namespace arf
