#pragma once

#include <cstdint>
#include <vector>

#include "arf/anchors.hpp"
#include "arf/data.hpp"
#include "arf/encoders.hpp"

namespace arf {

// Knobs of the synthetic benchmark. Defaults are the calibrated values that
// ship in configs/default.json.
struct GenConfig {
  std::size_t n_id_classes = 10;
  std::size_t n_zsl_classes = 10;
  std::size_t n_domains = 3;  // domain 0 plus n_domains - 1 shifted domains
  std::size_t d_latent = 8;
  std::size_t d_img_raw = 32;
  std::size_t d_txt_raw = 16;
  std::size_t pretrain_per_class = 40;  // per class and per domain
  std::size_t finetune_per_class = 40;
  std::size_t test_per_class = 40;
  std::size_t candidate_pool_size = 1000;
  double sigma_img = 0.2;
  double sigma_txt = 0.3;
  std::size_t context_bank_size = 32;
  double context_strength = 0.75;
  std::size_t contexts_per_caption = 2;
  // Weight of the same sample's contexts inside its image feature. Zero gives
  // images that carry class identity only.
  double image_context_strength = 0.75;
  double template_offset_scale = 0.5;
  std::uint64_t seed = 0;

  InputDims input_dims() const { return {d_img_raw, d_txt_raw}; }
  std::size_t n_classes() const { return n_id_classes + n_zsl_classes; }

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

// Throws ConfigError when an invariant of the configuration is violated.
void validate(const GenConfig& cfg);

// Hidden generative state: class prototypes and the maps into raw spaces.
struct SyntheticWorld {
  GenConfig config;
  Matrix prototypes;       // n_classes x d_latent, unit rows
  Matrix image_lift;       // d_img_raw x d_latent
  Matrix text_lift;        // d_txt_raw x d_latent
  Matrix context_latent;   // K x d_latent, unit rows
  Matrix context_bank;     // K x d_txt_raw, row j = text_lift * a_j
  Matrix context_image;    // K x d_img_raw, row j = image_lift * a_j
  Vector template_offset;  // d_txt_raw
  std::vector<Matrix> domain_transforms;  // index d; domain 0 is the identity

  Vector class_text(ClassId c) const;   // text_lift * mu_c
  Vector class_image(ClassId c) const;  // image_lift * mu_c
};

SyntheticWorld make_world(const GenConfig& cfg);

// d x d orthogonal matrix: Gram-Schmidt on a seeded gaussian matrix, with
// positive pivots. Numerically dependent draws are retried with a reseeded
// stream, at most 8 attempts.
Matrix random_rotation(std::uint64_t seed, std::size_t d);

// The m distinct context-bank rows attached to sample id. Image generation
// and the caption provider draw the same set for the same (id, seed).
std::vector<std::size_t> context_indices(const SyntheticWorld& world, SampleId id,
                                         std::uint64_t seed);

// Image feature: R_domain (image_lift mu_c + rho_img sum_j image_lift a_j + eps),
// eps ~ N(0, sigma_img^2 I), contexts j from context_indices(id, seed).
Vector synth_image(const SyntheticWorld& world, ClassId c, std::size_t domain, SampleId id,
                   std::uint64_t seed, RandomStream& noise);

// Caption-style text: text_lift mu_c + rho * sum of m distinct context-bank
// rows + gaussian noise sigma_txt. Deterministic in (id, seed).
Vector synth_caption(const SyntheticWorld& world, ClassId c, SampleId id, std::uint64_t seed);

// CaptionProvider over synth_caption, keyed by the sample's id and class.
class SyntheticCaptionProvider final : public CaptionProvider {
 public:
  SyntheticCaptionProvider(const SyntheticWorld& world, std::uint64_t seed)
      : world_(world), seed_(seed) {}
  std::optional<Vector> caption(const Sample& sample) const override;

 private:
  const SyntheticWorld& world_;
  std::uint64_t seed_;
};

struct BenchmarkBundle {
  GenConfig config;
  std::vector<ClassId> id_classes;
  std::vector<ClassId> zsl_classes;
  std::vector<CandidatePair> pretrain_pool;
  std::vector<Sample> finetune;
  std::vector<CaptionRecord> captions;  // one per finetune sample, same order
  PromptTable id_prompts;
  PromptTable zsl_prompts;
  std::vector<CandidatePair> candidates;
  std::vector<Sample> id_test;
  std::vector<Sample> ds_test;  // domains 1..n_domains-1
  std::vector<Sample> zsl_test;

  InputDims input_dims() const { return config.input_dims(); }
  std::vector<std::int64_t> ds_domains() const;
};

BenchmarkBundle generate_benchmark(const GenConfig& cfg);

}  // namespace arf
