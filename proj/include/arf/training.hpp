#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arf/anchors.hpp"
#include "arf/checkpoint.hpp"
#include "arf/data.hpp"
#include "arf/encoders.hpp"

namespace arf {

struct LossWeights {
  double cl = 1.0;
  double cap = 1.0;
  double ret = 1.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossSet {
  bool cl = true;
  bool cap = true;
  bool ret = true;

  friend bool operator==(const LossSet&, const LossSet&) = default;
};

// Comma-separated subset of {cl, cap, ret}; throws InvalidArgumentError.
LossSet parse_loss_set(std::string_view s);
std::string to_string(const LossSet& s);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double weight_decay = 0.1;
  LossWeights loss_weights;
  LossSet enabled_losses;
  AnchorLayout anchor_layout = AnchorLayout::sep;
  RetrievalMode retrieval_mode = RetrievalMode::v2t;
  std::size_t retrieval_k = 1;
  bool tau_trainable = false;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws ConfigError.
void validate(const TrainConfig& cfg);

// Large-scale finetuning protocol: B = 512, lr = 1e-5, wd = 0.1, 10 epochs.
TrainConfig with_paper_defaults(TrainConfig cfg);

// Defaults used to build the pretrained checkpoint: B = 64, 20 epochs,
// lr = 3e-3, wd = 0.1.
TrainConfig default_pretrain_config();

// Architecture of the dual encoder created by pretraining.
struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
  double init_tau = kDefaultInitTau;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// A term participates in the objective iff it is enabled and its weight is
// positive. The fingerprint hashes only what affects the result, so runs
// that differ in inert settings get the same fingerprint.
bool term_active(const TrainConfig& cfg, bool enabled, double weight);
std::string finetune_fingerprint(const TrainConfig& cfg);
std::string pretrain_fingerprint(const TrainConfig& cfg, const ModelConfig& model);

struct LossBreakdown {
  double l_cl = 0.0;
  double l_cap = 0.0;
  double l_ret = 0.0;
  double total = 0.0;
  bool skip_ret = false;
};

struct LossAndParamGrads {
  LossBreakdown loss;
  ParamGrads grads;
};

// Composite objective lambda_cl L_CL + lambda_cap L_Cap + lambda_ret L_Ret.
// L_CL pairs each image with its class prompt. In merge layout the single
// anchor loss is reported as l_cap and lambda_ret is unused. Terms that are
// disabled, or L_Ret when the anchor batch has fewer than two unique
// retrieved pairs, are exactly zero. Gradients accumulate in fixed order:
// cl, cap, ret, and within a term in pair order (image tower then text tower).
LossAndParamGrads compute_total_loss_and_grads(const DualEncoderParams& params,
                                               std::span<const Sample> batch,
                                               const PromptTable& prompts,
                                               const AnchorBatch& anchors,
                                               const TrainConfig& cfg);

// Forward-only version of the above.
LossBreakdown compute_total_loss(const DualEncoderParams& params, std::span<const Sample> batch,
                                 const PromptTable& prompts, const AnchorBatch& anchors,
                                 const TrainConfig& cfg);

// Contrastive loss of one list of raw pairs and its parameter gradient.
double pair_loss_and_grads(const DualEncoderParams& params, std::span<const RawPair> pairs,
                           double weight, ParamGrads* grads);

struct OptimizerState {
  ParamGrads first_moment;
  ParamGrads second_moment;
  std::size_t step = 0;
};

OptimizerState make_optimizer_state(const DualEncoderParams& params);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

// Decoupled weight decay Adam:
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
//   theta -= lr (m_hat / (sqrt(v_hat) + eps) + wd theta).
// log_tau is left untouched unless update_log_tau.
void adamw_update(DualEncoderParams& params, const ParamGrads& grads, OptimizerState& state,
                  double lr, double wd, bool update_log_tau);

struct LogRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

using TrainingLog = std::vector<LogRecord>;

struct TrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

// Contrastive-only training from init_params(cfg.seed, ...). Minibatches come
// from a seeded shuffle per epoch; a trailing batch of fewer than 2 pairs is
// dropped. Throws InvalidArgumentError when pool.size() < batch_size.
TrainResult pretrain(std::span<const CandidatePair> pool, InputDims dims, const ModelConfig& model,
                     const TrainConfig& cfg);

struct FinetuneInputs {
  std::span<const Sample> samples;
  const PromptTable* prompts = nullptr;
  std::span<const CaptionRecord> captions;
  std::span<const CandidatePair> candidates;
  const CandidateIndex* index = nullptr;  // required when L_Ret is active
};

struct FinetuneResult {
  Checkpoint checkpoint;
  TrainingLog log;
  std::vector<RetrievalAssignment> assignments;
};

// Anchor-regularized finetuning. Retrieval assignments are computed once from
// start's parameters. Each epoch shuffles the set and runs floor(N / B) full
// steps. Throws EmptyFinetuneSetError; InvalidArgumentError if start is not a
// pretrained checkpoint or the set is smaller than one batch;
// CheckpointMismatchError if the index was built from a different checkpoint.
FinetuneResult run_finetune(const FinetuneInputs& inputs, const Checkpoint& start,
                            const TrainConfig& cfg);

// Mean of total over the records of each epoch, indexed by epoch.
std::vector<double> epoch_mean_losses(const TrainingLog& log, std::size_t epochs);

}  // namespace arf
