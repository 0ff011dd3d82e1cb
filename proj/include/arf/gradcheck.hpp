#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "arf/encoders.hpp"

namespace arf {

struct CheckReport {
  double max_rel_err = 0.0;
  std::size_t elements_checked = 0;  // elements with |analytic| > min_abs
  std::size_t elements_total = 0;
  double eps = 0.0;
  double tolerance = 0.0;
  std::string worst_element;  // "<block>[<index>]"
  bool passed = false;
};

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckMinAbs = 1e-8;

using ScalarLoss = std::function<double(const DualEncoderParams&)>;

// Central differences (L(theta + eps) - L(theta - eps)) / (2 eps) on every
// parameter element. Relative error is |a - n| / max(|a|, |n|), taken over
// elements with |a| > min_abs; passes iff the worst one is <= tolerance.
CheckReport check_gradients(const DualEncoderParams& params, const ParamGrads& analytic,
                            const ScalarLoss& loss, double eps,
                            double tolerance = kGradCheckTolerance,
                            double min_abs = kGradCheckMinAbs);

struct GradCheckDims {
  std::size_t batch = 8;
  std::size_t d_img = 6;
  std::size_t d_txt = 6;
  std::size_t hidden = 6;
  std::size_t embed_dim = 4;
};

// Optional corruption of the analytic gradient, used to prove the check can fail.
struct GradCorruption {
  std::size_t element = 0;  // flat index in parameter_blocks order
  double delta = 1e-2;
};

// Benchmark images and captions -> dual encoder -> contrastive loss; compares
// the closed-form gradient against central differences.
// Throws InvalidArgumentError unless eps lies in (1e-8, 1e-2).
CheckReport grad_check(std::uint64_t seed, const GradCheckDims& dims = {}, double eps = 1e-5,
                       std::optional<GradCorruption> corruption = std::nullopt);

// Same check on the full composite objective: B = 4 finetune samples with
// L_CL, L_Cap and L_Ret all active in the sep layout. Retrieval uses k = 2 so
// the batch always has at least two unique retrieved pairs.
CheckReport full_objective_grad_check(std::uint64_t seed, double eps = 1e-5);

std::string describe(const CheckReport& r);

}  // namespace arf
