#include "arf/evaluation.hpp"

#include <cmath>
#include <cstdio>

namespace arf {

Matrix build_prompt_classifier(const DualEncoderParams& params, const PromptTable& prompts) {
  return encode_rows(params, Modality::text, prompts.prompt_features());
}

ClassId argmax_class(std::span<const double> scores, std::span<const ClassId> class_ids) {
  if (scores.empty() || scores.size() != class_ids.size()) {
    throw InvalidArgumentError("argmax_class: scores and class ids must be non-empty and aligned");
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best] || (scores[c] == scores[best] && class_ids[c] < class_ids[best])) {
      best = c;
    }
  }
  return class_ids[best];
}

std::vector<ClassId> classify(const DualEncoderParams& params, std::span<const Sample> images,
                              const Matrix& classifier, std::span<const ClassId> class_ids) {
  if (classifier.rows() == 0) throw InvalidArgumentError("classifier has no classes");
  if (classifier.rows() != class_ids.size()) {
    throw DimensionError("classifier rows do not match the class list");
  }
  std::vector<ClassId> out;
  out.reserve(images.size());
  Vector scores(classifier.rows());
  for (const auto& s : images) {
    const Vector f = encode(params, Modality::image, s.feature);
    for (std::size_t c = 0; c < classifier.rows(); ++c) scores[c] = dot(f, classifier.row(c));
    out.push_back(argmax_class(scores, class_ids));
  }
  return out;
}

const SplitMetrics* Metrics::find(std::string_view name) const {
  for (const auto& s : splits)
    if (s.split_name == name) return &s;
  return nullptr;
}

std::optional<double> Metrics::mean_ds() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : splits) {
    if (s.split_name.rfind("ds", 0) == 0) {
      sum += s.accuracy_percent;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

SplitMetrics score_split(std::string name, std::span<const ClassId> predictions,
                         std::span<const Sample> samples) {
  if (samples.empty()) throw EmptySplitError("split '" + name + "' has no samples");
  if (predictions.size() != samples.size()) {
    throw DimensionError("prediction count does not match split size");
  }
  SplitMetrics m{std::move(name), samples.size(), 0, 0.0};
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (predictions[i] == samples[i].class_id) ++m.correct;
  m.accuracy_percent = 100.0 * static_cast<double>(m.correct) / static_cast<double>(m.n);
  return m;
}

SplitSelection parse_split_selection(std::string_view s) {
  SplitSelection out{false, false, false};
  std::size_t pos = 0;
  while (true) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string_view::npos ? s.size() - pos : comma - pos);
    if (tok == "id") {
      out.id = true;
    } else if (tok == "ds") {
      out.ds = true;
    } else if (tok == "zsl") {
      out.zsl = true;
    } else {
      throw InvalidArgumentError("unknown split '" + std::string(tok) + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

namespace {

PromptTable concat(const PromptTable& a, const PromptTable& b) {
  std::vector<ClassId> ids = a.class_ids();
  ids.insert(ids.end(), b.class_ids().begin(), b.class_ids().end());
  Matrix m = a.prompt_features();
  for (std::size_t i = 0; i < b.size(); ++i) m.append_row(b.prompt_features().row(i));
  return PromptTable(std::move(ids), std::move(m));
}

SplitMetrics eval_split(const DualEncoderParams& params, std::string name,
                        std::span<const Sample> samples, const PromptTable& prompts) {
  if (samples.empty()) throw EmptySplitError("split '" + name + "' has no samples");
  const Matrix classifier = build_prompt_classifier(params, prompts);
  const auto preds = classify(params, samples, classifier, prompts.class_ids());
  return score_split(std::move(name), preds, samples);
}

}  // namespace

Metrics evaluate_splits(const DualEncoderParams& params, const BenchmarkBundle& bundle,
                        const EvalOptions& options) {
  if (!options.splits.any()) throw EmptySplitError("no evaluation split requested");
  Metrics m;
  if (options.splits.id) {
    m.splits.push_back(eval_split(params, "id", bundle.id_test, bundle.id_prompts));
  }
  if (options.splits.ds) {
    const auto domains = bundle.ds_domains();
    if (domains.empty()) throw EmptySplitError("bundle has no domain-shift split");
    for (auto d : domains) {
      std::vector<Sample> part;
      for (const auto& s : bundle.ds_test)
        if (s.domain_id == d) part.push_back(s);
      m.splits.push_back(eval_split(params, "ds" + std::to_string(d), part, bundle.id_prompts));
    }
  }
  if (options.splits.zsl) {
    const PromptTable table =
        options.strict_zsl ? concat(bundle.id_prompts, bundle.zsl_prompts) : bundle.zsl_prompts;
    m.splits.push_back(eval_split(params, "zsl", bundle.zsl_test, table));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : m.splits) {
    if (s.split_name == "id") continue;
    sum += s.accuracy_percent;
    ++n;
  }
  if (n) m.avg_ood = sum / static_cast<double>(n);
  return m;
}

DualEncoderParams ensemble_weights(const DualEncoderParams& pre, const DualEncoderParams& ft,
                                   double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InvalidArgumentError("mixing coefficient must lie in [0, 1]");
  }
  DualEncoderParams out = pre;
  auto o = parameter_blocks(out);
  auto p = parameter_blocks(pre);
  auto f = parameter_blocks(ft);
  if (p.size() != f.size()) throw DimensionError("ensemble: parameter layout mismatch");
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b].size() != f[b].size()) {
      throw DimensionError("ensemble: block " + std::to_string(b) + " shape mismatch");
    }
  }
  if (pre.image.w1.rows() != ft.image.w1.rows() || pre.text.w1.rows() != ft.text.w1.rows() ||
      pre.image.w2.rows() != ft.image.w2.rows() || pre.text.w2.rows() != ft.text.w2.rows()) {
    throw DimensionError("ensemble: matrix shapes differ");
  }
  // The endpoints are returned verbatim so they match their sources bit for bit.
  if (alpha == 0.0) return pre;
  if (alpha == 1.0) return ft;
  for (std::size_t b = 0; b < p.size(); ++b)
    for (std::size_t i = 0; i < p[b].size(); ++i)
      o[b][i] = (1.0 - alpha) * p[b][i] + alpha * f[b][i];
  return out;
}

DualEncoderParams ensemble_weights(const Checkpoint& pre, const Checkpoint& ft, double alpha) {
  return ensemble_weights(pre.params, ft.params, alpha);
}

std::vector<double> default_alphas() {
  std::vector<double> a;
  for (int i = 0; i <= 10; ++i) a.push_back(static_cast<double>(i) / 10.0);
  return a;
}

EnsembleCurve ensemble_sweep(const Checkpoint& pre, const Checkpoint& ft,
                             std::span<const double> alphas, const BenchmarkBundle& bundle,
                             const EvalOptions& options) {
  if (alphas.empty()) throw InvalidArgumentError("alpha grid is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) {
      throw InvalidArgumentError("alpha values must lie in [0, 1]");
    }
    if (i && !(alphas[i] > alphas[i - 1])) {
      throw InvalidArgumentError("alpha values must be strictly increasing");
    }
  }
  EnsembleCurve curve;
  double best_id = -1.0;
  for (double a : alphas) {
    EnsembleRow row{a, evaluate_splits(ensemble_weights(pre, ft, a), bundle, options)};
    if (const auto* id = row.metrics.find("id"); id && id->accuracy_percent > best_id) {
      best_id = id->accuracy_percent;
      curve.best_id_alpha = a;
    }
    curve.rows.push_back(std::move(row));
  }
  return curve;
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string ensemble_curve_csv(const EnsembleCurve& curve) {
  std::string out = "alpha";
  if (curve.rows.empty()) return out + ",avg_ood,best_id_alpha\n";
  const auto& first = curve.rows.front().metrics.splits;
  // id first, then ds splits in evaluation order, then zsl
  std::vector<std::string> cols;
  for (const auto& s : first)
    if (s.split_name == "id") cols.push_back(s.split_name);
  for (const auto& s : first)
    if (s.split_name.rfind("ds", 0) == 0) cols.push_back(s.split_name);
  for (const auto& s : first)
    if (s.split_name == "zsl") cols.push_back(s.split_name);
  for (const auto& c : cols) out += "," + c;
  out += ",avg_ood,best_id_alpha\n";
  for (const auto& row : curve.rows) {
    out += format_double(row.alpha);
    for (const auto& c : cols) {
      const auto* s = row.metrics.find(c);
      out += "," + (s ? fixed4(s->accuracy_percent) : std::string());
    }
    out += "," + (row.metrics.avg_ood ? fixed4(*row.metrics.avg_ood) : std::string());
    out += "," + format_double(curve.best_id_alpha) + "\n";
  }
  return out;
}

}  // namespace arf
