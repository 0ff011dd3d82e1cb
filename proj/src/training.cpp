#include "arf/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "arf/contrastive.hpp"

namespace arf {

LossSet parse_loss_set(std::string_view s) {
  LossSet out{false, false, false};
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string_view::npos ? s.size() - pos : comma - pos);
    if (tok == "cl") {
      out.cl = true;
    } else if (tok == "cap") {
      out.cap = true;
    } else if (tok == "ret") {
      out.ret = true;
    } else {
      throw InvalidArgumentError("unknown loss term '" + std::string(tok) + "'");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string to_string(const LossSet& s) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(s.cl, "cl");
  add(s.cap, "cap");
  add(s.ret, "ret");
  return out;
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  const auto& w = cfg.loss_weights;
  if (!(w.cl >= 0.0 && w.cap >= 0.0 && w.ret >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (cfg.retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
  if (cfg.anchor_layout == AnchorLayout::merge && cfg.enabled_losses.ret &&
      !cfg.enabled_losses.cap) {
    throw ConfigError("merge layout folds retrieved anchors into the cap loss; enable cap");
  }
}

TrainConfig with_paper_defaults(TrainConfig cfg) {
  cfg.learning_rate = 1e-5;
  cfg.weight_decay = 0.1;
  cfg.batch_size = 512;
  cfg.epochs = 10;
  return cfg;
}

TrainConfig default_pretrain_config() {
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 20;
  cfg.learning_rate = 3e-3;
  cfg.weight_decay = 0.1;
  return cfg;
}

bool term_active(const TrainConfig&, bool enabled, double weight) { return enabled && weight > 0.0; }

namespace {

std::string common_fingerprint_fields(const TrainConfig& cfg) {
  std::ostringstream ss;
  ss << "batch_size=" << cfg.batch_size << ";epochs=" << cfg.epochs
     << ";learning_rate=" << format_double(cfg.learning_rate)
     << ";weight_decay=" << format_double(cfg.weight_decay) << ";seed=" << cfg.seed
     << ";tau_trainable=" << cfg.tau_trainable;
  return ss.str();
}

}  // namespace

std::string finetune_fingerprint(const TrainConfig& cfg) {
  const auto& e = cfg.enabled_losses;
  const auto& w = cfg.loss_weights;
  const bool cl = term_active(cfg, e.cl, w.cl);
  const bool cap = term_active(cfg, e.cap, w.cap);
  const bool ret = cfg.anchor_layout == AnchorLayout::merge ? (cap && e.ret)
                                                            : term_active(cfg, e.ret, w.ret);
  std::ostringstream ss;
  ss << "finetune;" << common_fingerprint_fields(cfg);
  if (cl) ss << ";cl=" << format_double(w.cl);
  if (cap) ss << ";cap=" << format_double(w.cap);
  if (ret && cfg.anchor_layout == AnchorLayout::sep) ss << ";ret=" << format_double(w.ret);
  if (cap && ret) ss << ";layout=" << to_string(cfg.anchor_layout);
  if (ret) ss << ";retrieval=" << to_string(cfg.retrieval_mode) << ";k=" << cfg.retrieval_k;
  return sha256_hex(ss.str()).substr(0, 16);
}

std::string pretrain_fingerprint(const TrainConfig& cfg, const ModelConfig& model) {
  std::ostringstream ss;
  ss << "pretrain;" << common_fingerprint_fields(cfg) << ";hidden=" << model.hidden
     << ";embed_dim=" << model.embed_dim << ";init_tau=" << format_double(model.init_tau);
  return sha256_hex(ss.str()).substr(0, 16);
}

double pair_loss_and_grads(const DualEncoderParams& params, std::span<const RawPair> pairs,
                           double weight, ParamGrads* grads) {
  const std::size_t n = pairs.size();
  if (n < 2) return 0.0;  // a single pair is its own softmax: loss and gradient vanish
  const std::size_t d = params.image.embed_dim();
  std::vector<EncoderTrace> image_traces;
  std::vector<EncoderTrace> text_traces;
  image_traces.reserve(n);
  text_traces.reserve(n);
  PairBatch batch{Matrix(n, d), Matrix(n, d)};
  for (std::size_t i = 0; i < n; ++i) {
    if (pairs[i].image.size() != params.image.input_dim() ||
        pairs[i].text.size() != params.text.input_dim()) {
      throw DimensionError("anchor pair feature dimension mismatch");
    }
    image_traces.push_back(encode_trace(params.image, pairs[i].image));
    text_traces.push_back(encode_trace(params.text, pairs[i].text));
    batch.image_embeddings.set_row(i, image_traces.back().embedding);
    batch.text_embeddings.set_row(i, text_traces.back().embedding);
  }
  const double tau = params.tau();
  if (grads == nullptr) return contrastive_loss(batch, tau).total;

  const LossAndGrads lg = contrastive_loss_and_grads(batch, tau);
  Vector scaled(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = lg.grads.d_image.row(i);
    for (std::size_t k = 0; k < d; ++k) scaled[k] = weight * gi[k];
    accumulate_encoder_backward(params, Modality::image, pairs[i].image, image_traces[i], scaled,
                                *grads);
    auto gt = lg.grads.d_text.row(i);
    for (std::size_t k = 0; k < d; ++k) scaled[k] = weight * gt[k];
    accumulate_encoder_backward(params, Modality::text, pairs[i].text, text_traces[i], scaled,
                                *grads);
  }
  grads->log_tau += weight * lg.grads.d_log_tau;
  return lg.loss.total;
}

namespace {

LossBreakdown total_loss_impl(const DualEncoderParams& params, std::span<const Sample> batch,
                              const PromptTable& prompts, const AnchorBatch& anchors,
                              const TrainConfig& cfg, ParamGrads* grads) {
  const auto& e = cfg.enabled_losses;
  const auto& w = cfg.loss_weights;
  auto sink = [&](double weight) { return weight > 0.0 ? grads : nullptr; };

  LossBreakdown b;
  if (e.cl) {
    std::vector<RawPair> pairs;
    pairs.reserve(batch.size());
    for (const auto& s : batch) pairs.push_back({s.feature, prompts.prompt(s.class_id)});
    b.l_cl = pair_loss_and_grads(params, pairs, w.cl, sink(w.cl));
  }
  if (e.cap) b.l_cap = pair_loss_and_grads(params, anchors.caption_pairs, w.cap, sink(w.cap));
  if (e.ret) {
    b.skip_ret = anchors.skip_ret;
    if (anchors.layout == AnchorLayout::sep && !anchors.skip_ret) {
      b.l_ret = pair_loss_and_grads(params, anchors.retrieved_pairs, w.ret, sink(w.ret));
    }
  }
  b.total = w.cl * b.l_cl + w.cap * b.l_cap + w.ret * b.l_ret;
  return b;
}

std::vector<Sample> gather(std::span<const Sample> samples, std::span<const std::size_t> idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(samples[i]);
  return out;
}

enum ShuffleStream : std::uint64_t { kPretrainShuffle = 101, kFinetuneShuffle = 102 };

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t stream,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(derive_seed(derive_seed(seed, stream), epoch));
  shuffle(order, rng);
  return order;
}

}  // namespace

LossAndParamGrads compute_total_loss_and_grads(const DualEncoderParams& params,
                                               std::span<const Sample> batch,
                                               const PromptTable& prompts,
                                               const AnchorBatch& anchors,
                                               const TrainConfig& cfg) {
  LossAndParamGrads out{{}, zeros_like(params)};
  out.loss = total_loss_impl(params, batch, prompts, anchors, cfg, &out.grads);
  return out;
}

LossBreakdown compute_total_loss(const DualEncoderParams& params, std::span<const Sample> batch,
                                 const PromptTable& prompts, const AnchorBatch& anchors,
                                 const TrainConfig& cfg) {
  return total_loss_impl(params, batch, prompts, anchors, cfg, nullptr);
}

OptimizerState make_optimizer_state(const DualEncoderParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

void adamw_update(DualEncoderParams& params, const ParamGrads& grads, OptimizerState& state,
                  double lr, double wd, bool update_log_tau) {
  auto p = parameter_blocks(params);
  auto g = parameter_blocks(grads);
  auto m = parameter_blocks(state.first_moment);
  auto v = parameter_blocks(state.second_moment);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw DimensionError("adamw_update: parameter layout mismatch");
  }
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b].size() != g[b].size() || p[b].size() != m[b].size() || p[b].size() != v[b].size()) {
      throw DimensionError("adamw_update: block " + std::to_string(b) + " shape mismatch");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
  const std::size_t trainable = update_log_tau ? p.size() : p.size() - 1;  // log_tau is last
  for (std::size_t b = 0; b < trainable; ++b) {
    for (std::size_t i = 0; i < p[b].size(); ++i) {
      const double gi = g[b][i];
      m[b][i] = kAdamBeta1 * m[b][i] + (1.0 - kAdamBeta1) * gi;
      v[b][i] = kAdamBeta2 * v[b][i] + (1.0 - kAdamBeta2) * gi * gi;
      const double m_hat = m[b][i] / bc1;
      const double v_hat = v[b][i] / bc2;
      p[b][i] -= lr * (m_hat / (std::sqrt(v_hat) + kAdamEpsilon) + wd * p[b][i]);
    }
  }
}

TrainResult pretrain(std::span<const CandidatePair> pool, InputDims dims, const ModelConfig& model,
                     const TrainConfig& cfg) {
  validate(cfg);
  if (pool.size() < cfg.batch_size) {
    throw InvalidArgumentError("pretraining pool of " + std::to_string(pool.size()) +
                               " pairs is smaller than batch size " +
                               std::to_string(cfg.batch_size));
  }
  DualEncoderParams params =
      init_params(cfg.seed, dims, model.hidden, model.embed_dim, model.init_tau);
  OptimizerState state = make_optimizer_state(params);
  TrainingLog log;
  std::vector<RawPair> pairs;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(pool.size(), cfg.seed, kPretrainShuffle, epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      if (n < 2) break;
      pairs.clear();
      for (std::size_t i = start; i < start + n; ++i) {
        pairs.push_back({pool[order[i]].image_feature, pool[order[i]].text_feature});
      }
      ParamGrads grads = zeros_like(params);
      LogRecord rec{log.size(), epoch, {}};
      rec.loss.l_cl = pair_loss_and_grads(params, pairs, 1.0, &grads);
      rec.loss.total = rec.loss.l_cl;
      adamw_update(params, grads, state, cfg.learning_rate, cfg.weight_decay, cfg.tau_trainable);
      log.push_back(rec);
    }
  }
  return {make_checkpoint(std::move(params), pretrain_fingerprint(cfg, model),
                          Provenance::pretrained),
          std::move(log)};
}

FinetuneResult run_finetune(const FinetuneInputs& in, const Checkpoint& start,
                            const TrainConfig& cfg) {
  validate(cfg);
  if (in.samples.empty()) throw EmptyFinetuneSetError("finetune set is empty");
  if (in.samples.size() < cfg.batch_size) {
    throw InvalidArgumentError("finetune set of " + std::to_string(in.samples.size()) +
                               " samples is smaller than batch size " +
                               std::to_string(cfg.batch_size) + "; no step would run");
  }
  if (in.prompts == nullptr) throw InvalidArgumentError("finetuning needs a prompt table");
  if (start.provenance != Provenance::pretrained) {
    throw InvalidArgumentError("finetuning must start from a pretrained checkpoint");
  }
  const auto& e = cfg.enabled_losses;

  FinetuneResult result;
  if (e.ret) {
    if (in.index == nullptr) throw InvalidArgumentError("retrieval anchors need a candidate index");
    const auto queries = make_retrieval_queries(in.samples, *in.prompts, cfg.retrieval_mode);
    result.assignments = retrieve(*in.index, queries, start, cfg.retrieval_mode, cfg.retrieval_k);
  }
  const bool with_anchors = e.cap || e.ret;
  const AnchorSources sources(in.captions, result.assignments, in.candidates);

  DualEncoderParams params = start.params;
  OptimizerState state = make_optimizer_state(params);
  const std::size_t steps = in.samples.size() / cfg.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(in.samples.size(), cfg.seed, kFinetuneShuffle, epoch);
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch = gather(
          in.samples, std::span<const std::size_t>(order).subspan(s * cfg.batch_size, cfg.batch_size));
      AnchorBatch anchors;
      anchors.layout = cfg.anchor_layout;
      if (with_anchors) anchors = sources.assemble(batch, cfg.anchor_layout, e.ret);
      auto step = compute_total_loss_and_grads(params, batch, *in.prompts, anchors, cfg);
      adamw_update(params, step.grads, state, cfg.learning_rate, cfg.weight_decay,
                   cfg.tau_trainable);
      result.log.push_back({result.log.size(), epoch, step.loss});
    }
  }
  result.checkpoint =
      make_checkpoint(std::move(params), finetune_fingerprint(cfg), Provenance::finetuned);
  return result;
}

std::vector<double> epoch_mean_losses(const TrainingLog& log, std::size_t epochs) {
  std::vector<double> sum(epochs, 0.0);
  std::vector<std::size_t> count(epochs, 0);
  for (const auto& r : log) {
    if (r.epoch >= epochs) continue;
    sum[r.epoch] += r.loss.total;
    ++count[r.epoch];
  }
  for (std::size_t i = 0; i < epochs; ++i) {
    if (count[i]) sum[i] /= static_cast<double>(count[i]);
  }
  return sum;
}

}  // namespace arf
