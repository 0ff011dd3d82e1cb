#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arf/benchgen.hpp"
#include "arf/checkpoint.hpp"
#include "arf/data.hpp"
#include "arf/encoders.hpp"

namespace arf {

// Rows are g(t_c) in class_ids order.
Matrix build_prompt_classifier(const DualEncoderParams& params, const PromptTable& prompts);

// Index of the largest score; ties go to the lowest class id.
ClassId argmax_class(std::span<const double> scores, std::span<const ClassId> class_ids);

// Predicted class per image: argmax over classifier rows of f(x) . row.
// Throws InvalidArgumentError for an empty classifier.
std::vector<ClassId> classify(const DualEncoderParams& params, std::span<const Sample> images,
                              const Matrix& classifier, std::span<const ClassId> class_ids);

struct SplitMetrics {
  std::string split_name;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy_percent = 0.0;
};

struct Metrics {
  std::string label;
  std::vector<SplitMetrics> splits;
  std::optional<double> avg_ood;  // unweighted mean over every non-ID split

  const SplitMetrics* find(std::string_view name) const;
  // Mean accuracy over the domain-shift splits; nullopt when none were evaluated.
  std::optional<double> mean_ds() const;
};

SplitMetrics score_split(std::string name, std::span<const ClassId> predictions,
                         std::span<const Sample> samples);

struct SplitSelection {
  bool id = true;
  bool ds = true;
  bool zsl = true;

  bool any() const { return id || ds || zsl; }
};

SplitSelection parse_split_selection(std::string_view s);

struct EvalOptions {
  SplitSelection splits;
  // Classify the ZSL split over C^id and C^zsl together instead of C^zsl only.
  bool strict_zsl = false;
};

// Split order: id, ds<d> for each shifted domain, zsl. Throws EmptySplitError
// when nothing is requested or a requested split has no samples.
Metrics evaluate_splits(const DualEncoderParams& params, const BenchmarkBundle& bundle,
                        const EvalOptions& options);

// Elementwise (1 - alpha) pre + alpha ft over every parameter, log_tau included.
DualEncoderParams ensemble_weights(const DualEncoderParams& pre, const DualEncoderParams& ft,
                                   double alpha);
DualEncoderParams ensemble_weights(const Checkpoint& pre, const Checkpoint& ft, double alpha);

// 0.0, 0.1, ..., 1.0
std::vector<double> default_alphas();

struct EnsembleRow {
  double alpha = 0.0;
  Metrics metrics;
};

struct EnsembleCurve {
  std::vector<EnsembleRow> rows;
  double best_id_alpha = 0.0;  // highest ID accuracy, ties to the smaller alpha
};

// Throws InvalidArgumentError unless alphas are non-empty, in [0, 1] and
// strictly increasing.
EnsembleCurve ensemble_sweep(const Checkpoint& pre, const Checkpoint& ft,
                             std::span<const double> alphas, const BenchmarkBundle& bundle,
                             const EvalOptions& options);

// Header: alpha,id,<ds splits...>,zsl,avg_ood,best_id_alpha (absent splits omitted).
std::string ensemble_curve_csv(const EnsembleCurve& curve);

}  // namespace arf
