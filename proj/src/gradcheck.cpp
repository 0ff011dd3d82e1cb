#include "arf/gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "arf/benchgen.hpp"
#include "arf/training.hpp"

namespace arf {

namespace {

constexpr const char* kBlockNames[] = {"image.w1", "image.b1", "image.w2", "image.b2", "text.w1",
                                       "text.b1",  "text.w2",  "text.b2",  "log_tau"};

void check_eps(double eps) {
  if (!(eps > 1e-8 && eps < 1e-2)) throw InvalidArgumentError("eps must lie in (1e-8, 1e-2)");
}

GenConfig small_world(std::uint64_t seed, std::size_t d_img, std::size_t d_txt) {
  GenConfig g;
  g.n_id_classes = 4;
  g.n_zsl_classes = 2;
  g.n_domains = 1;
  g.d_latent = std::min<std::size_t>(3, std::min(d_img, d_txt));
  g.d_img_raw = d_img;
  g.d_txt_raw = d_txt;
  g.pretrain_per_class = 0;
  g.finetune_per_class = 4;
  g.test_per_class = 1;
  g.candidate_pool_size = 24;
  g.context_bank_size = 8;
  g.contexts_per_caption = 2;
  g.seed = seed;
  return g;
}

}  // namespace

CheckReport check_gradients(const DualEncoderParams& params, const ParamGrads& analytic,
                            const ScalarLoss& loss, double eps, double tolerance,
                            double min_abs) {
  check_eps(eps);
  CheckReport r;
  r.eps = eps;
  r.tolerance = tolerance;
  DualEncoderParams probe = params;
  auto blocks = parameter_blocks(probe);
  const auto grads = parameter_blocks(analytic);
  if (grads.size() != blocks.size()) throw DimensionError("gradient layout mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (grads[b].size() != blocks[b].size()) throw DimensionError("gradient block shape mismatch");
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      ++r.elements_total;
      const double a = grads[b][i];
      const double saved = blocks[b][i];
      blocks[b][i] = saved + eps;
      const double up = loss(probe);
      blocks[b][i] = saved - eps;
      const double down = loss(probe);
      blocks[b][i] = saved;
      if (!(std::abs(a) > min_abs)) continue;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
      ++r.elements_checked;
      if (rel > r.max_rel_err || !std::isfinite(rel)) {
        r.max_rel_err = rel;
        r.worst_element = std::string(kBlockNames[b]) + "[" + std::to_string(i) + "]";
      }
    }
  }
  r.passed = std::isfinite(r.max_rel_err) && r.max_rel_err <= tolerance;
  return r;
}

CheckReport grad_check(std::uint64_t seed, const GradCheckDims& dims, double eps,
                       std::optional<GradCorruption> corruption) {
  check_eps(eps);
  GenConfig g = small_world(seed, dims.d_img, dims.d_txt);
  g.finetune_per_class = (dims.batch + g.n_id_classes - 1) / g.n_id_classes;
  const BenchmarkBundle bundle = generate_benchmark(g);
  const DualEncoderParams params =
      init_params(derive_seed(seed, 7), bundle.input_dims(), dims.hidden, dims.embed_dim);

  std::vector<RawPair> pairs;
  for (std::size_t i = 0; i < dims.batch; ++i) {
    pairs.push_back({bundle.finetune[i].feature, bundle.captions[i].caption_feature});
  }
  ParamGrads analytic = zeros_like(params);
  pair_loss_and_grads(params, pairs, 1.0, &analytic);
  if (corruption) {
    std::size_t remaining = corruption->element;
    for (auto block : parameter_blocks(analytic)) {
      if (remaining < block.size()) {
        block[remaining] += corruption->delta;
        break;
      }
      remaining -= block.size();
    }
  }
  return check_gradients(params, analytic, [&](const DualEncoderParams& p) {
    return pair_loss_and_grads(p, pairs, 1.0, nullptr);
  }, eps);
}

CheckReport full_objective_grad_check(std::uint64_t seed, double eps) {
  check_eps(eps);
  GenConfig g = small_world(seed, 6, 7);
  const BenchmarkBundle bundle = generate_benchmark(g);
  const Checkpoint ckpt = make_checkpoint(
      init_params(derive_seed(seed, 7), bundle.input_dims(), 6, 4), "gradcheck",
      Provenance::pretrained);

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.anchor_layout = AnchorLayout::sep;
  cfg.retrieval_mode = RetrievalMode::v2t;
  cfg.retrieval_k = 2;
  cfg.tau_trainable = true;

  // One sample per ID class.
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < bundle.finetune.size() && batch.size() < 4;
       i += g.finetune_per_class) {
    batch.push_back(bundle.finetune[i]);
  }
  const CandidateIndex index = build_candidate_index(ckpt, bundle.candidates);
  const auto queries = make_retrieval_queries(batch, bundle.id_prompts, cfg.retrieval_mode);
  const auto assignments = retrieve(index, queries, ckpt, cfg.retrieval_mode, cfg.retrieval_k);
  const AnchorBatch anchors = assemble_anchor_batch(batch, bundle.captions, assignments,
                                                    bundle.candidates, AnchorLayout::sep);

  const auto analytic =
      compute_total_loss_and_grads(ckpt.params, batch, bundle.id_prompts, anchors, cfg);
  return check_gradients(ckpt.params, analytic.grads, [&](const DualEncoderParams& p) {
    return compute_total_loss(p, batch, bundle.id_prompts, anchors, cfg).total;
  }, eps);
}

std::string describe(const CheckReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "max_rel_err=%.3e elements_checked=%zu elements_total=%zu eps=%.1e tol=%.1e "
                "worst=%s %s",
                r.max_rel_err, r.elements_checked, r.elements_total, r.eps, r.tolerance,
                r.worst_element.empty() ? "-" : r.worst_element.c_str(),
                r.passed ? "PASS" : "FAIL");
  return buf;
}

}  // namespace arf
