#include <doctest.h>

#include <cmath>

#include "arf/encoders.hpp"
#include "arf/errors.hpp"
#include "arf/gradcheck.hpp"

using namespace arf;

namespace {

DualEncoderParams tiny() { return init_params(4, {5, 3}, 6, 4); }

// Finite differences of v . encode(params, m, raw) against encoder_backward.
CheckReport backward_check(std::uint64_t seed) {
  RandomStream rng(seed);
  const DualEncoderParams params = init_params(seed, {5, 4}, 6, 3);
  const Modality m = rng.uniform() < 0.5 ? Modality::image : Modality::text;
  const Vector raw = gaussian_vector(rng, params.tower(m).input_dim());
  const Vector v = gaussian_vector(rng, 3);
  ParamGrads g = zeros_like(params);
  accumulate_encoder_backward(params, m, raw, v, g);
  return check_gradients(params, g, [&](const DualEncoderParams& p) {
    return dot(v, encode(p, m, raw));
  }, 1e-5);
}

}  // namespace

TEST_CASE("init_params: determinism, shapes, scale") {
  const auto a = init_params(0, {5, 3}, 6, 4);
  const auto b = init_params(0, {5, 3}, 6, 4);
  CHECK(a == b);
  CHECK(a.image.w1 != init_params(1, {5, 3}, 6, 4).image.w1);
  CHECK(a.image.w1.rows() == 6);
  CHECK(a.image.w1.cols() == 5);
  CHECK(a.text.w1.cols() == 3);
  CHECK(a.image.w2.rows() == 4);
  CHECK(a.text.w2.cols() == 6);
  CHECK(a.image.b1 == Vector(6, 0.0));
  CHECK(a.text.b2 == Vector(4, 0.0));
  CHECK(a.tau() == doctest::Approx(0.07).epsilon(1e-15));
  CHECK(parameter_count(a) == 6 * 5 + 6 + 4 * 6 + 4 + 6 * 3 + 6 + 4 * 6 + 4 + 1);

  // Large tower: sample variance of W1 entries is close to 1 / fan_in.
  const auto big = init_params(3, {400, 2}, 300, 2);
  double sq = 0.0;
  for (double w : big.image.w1.values()) sq += w * w;
  CHECK(sq / big.image.w1.size() == doctest::Approx(1.0 / 400).epsilon(0.02));

  CHECK_THROWS_AS(init_params(0, {0, 3}, 6, 4), DimensionError);
  CHECK_THROWS_AS(init_params(0, {5, 3}, 6, 1), DimensionError);
}

TEST_CASE("encode: constant map when W2 = 0") {
  auto p = tiny();
  for (auto* t : {&p.image, &p.text}) {
    t->w2 = Matrix(4, 6);
    t->b2 = Vector{1, 0, 0, 0};
  }
  RandomStream rng(1);
  for (int i = 0; i < 10; ++i) {
    CHECK(encode(p, Modality::image, gaussian_vector(rng, 5)) == Vector{1, 0, 0, 0});
    CHECK(encode(p, Modality::text, gaussian_vector(rng, 3)) == Vector{1, 0, 0, 0});
  }
}

TEST_CASE("encode: hand-evaluated one-unit instance") {
  DualEncoderParams p;
  p.image.w1 = Matrix(1, 1, std::vector<double>{1});
  p.image.b1 = {0};
  p.image.w2 = Matrix(2, 1, std::vector<double>{1, 1});
  p.image.b2 = {0, 1};
  p.text = p.image;
  p.log_tau = std::log(0.07);
  const double h = std::tanh(0.5);
  const double n = std::sqrt(h * h + (h + 1) * (h + 1));
  const Vector e = encode(p, Modality::image, Vector{0.5});
  CHECK(e[0] == doctest::Approx(h / n).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx((h + 1) / n).epsilon(1e-15));
}

TEST_CASE("encode: unit norm, determinism, joint scale invariance of W2 and b2") {
  auto p = tiny();
  RandomStream rng(2);
  for (double& b : p.image.b2) b = rng.gaussian();
  for (int i = 0; i < 100; ++i) {
    const Vector x = gaussian_vector(rng, 5, 3.0);
    const Vector e = encode(p, Modality::image, x);
    CHECK(std::abs(l2_norm(e) - 1.0) <= 1e-12);
    CHECK(e == encode(p, Modality::image, x));

    auto q = p;
    const double c = 0.1 + 10 * rng.uniform();
    for (double& w : q.image.w2.values()) w *= c;
    for (double& b : q.image.b2) b *= c;
    const Vector f = encode(q, Modality::image, x);
    for (std::size_t k = 0; k < e.size(); ++k) CHECK(std::abs(f[k] - e[k]) <= 1e-12);
  }
  CHECK_THROWS_AS(encode(p, Modality::image, Vector(4, 1.0)), DimensionError);
}

TEST_CASE("encode: vanishing pre-normalization output is an error") {
  auto p = tiny();
  p.text.w2 = Matrix(4, 6);
  p.text.b2 = Vector(4, 0.0);
  CHECK_THROWS_AS(encode(p, Modality::text, Vector{1, 2, 3}), ZeroVectorError);
}

TEST_CASE("encoder_backward: zero and parallel upstream gradients give zero") {
  const auto p = tiny();
  const Vector x{0.3, -1.0, 0.5, 2.0, 0.1};
  const EncoderParams zero = encoder_backward(p, Modality::image, x, Vector(4, 0.0));
  for (double v : zero.w1.values()) CHECK(v == 0.0);
  for (double v : zero.b2) CHECK(v == 0.0);

  Vector e = encode(p, Modality::image, x);
  for (double& v : e) v *= 2.5;
  const EncoderParams par = encoder_backward(p, Modality::image, x, e);
  for (double v : par.w1.values()) CHECK(std::abs(v) <= 1e-14);
  for (double v : par.w2.values()) CHECK(std::abs(v) <= 1e-14);
  for (double v : par.b1) CHECK(std::abs(v) <= 1e-14);
  for (double v : par.b2) CHECK(std::abs(v) <= 1e-14);

  CHECK_THROWS_AS(encoder_backward(p, Modality::image, x, Vector(3, 1.0)), DimensionError);
}

TEST_CASE("encoder_backward matches finite differences on 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CheckReport r = backward_check(seed);
    INFO("seed " << seed << ": " << describe(r));
    CHECK(r.passed);
    CHECK(r.elements_checked > 0);
  }
}

TEST_CASE("parameter_blocks order and zeros_like") {
  auto p = tiny();
  const auto blocks = parameter_blocks(p);
  REQUIRE(blocks.size() == 9);
  CHECK(blocks[0].data() == p.image.w1.values().data());
  CHECK(blocks[7].data() == p.text.b2.data());
  CHECK(blocks[8].data() == &p.log_tau);
  const auto z = zeros_like(p);
  CHECK(parameter_count(z) == parameter_count(p));
  for (auto b : parameter_blocks(z))
    for (double v : b) CHECK(v == 0.0);
}
