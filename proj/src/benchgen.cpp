#include "arf/benchgen.hpp"

#include <cmath>
#include <string>

namespace arf {

namespace {

// Sub-stream tags for derive_seed. Changing any of these changes every
// generated bundle.
enum Stream : std::uint64_t {
  kPrototypes = 1,
  kImageLift,
  kTextLift,
  kContextBank,
  kTemplate,
  kRotation,
  kPretrain,
  kFinetune,
  kCandidates,
  kIdTest,
  kDsTest,
  kZslTest,
  kCaptions,
  kContexts,
};

Vector add(Vector a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace

void validate(const GenConfig& cfg) {
  if (cfg.n_id_classes < 2) throw ConfigError("n_id_classes must be >= 2");
  if (cfg.n_zsl_classes < 2) throw ConfigError("n_zsl_classes must be >= 2");
  if (cfg.n_domains < 1) throw ConfigError("n_domains must be >= 1 (domain 0 must exist)");
  if (cfg.d_latent < 1) throw ConfigError("d_latent must be >= 1");
  if (cfg.d_latent > std::min(cfg.d_img_raw, cfg.d_txt_raw)) {
    throw ConfigError("d_latent must not exceed d_img_raw or d_txt_raw");
  }
  if (cfg.finetune_per_class < 1 || cfg.test_per_class < 1) {
    throw ConfigError("finetune_per_class and test_per_class must be >= 1");
  }
  if (cfg.candidate_pool_size < cfg.n_classes()) {
    throw ConfigError("candidate_pool_size " + std::to_string(cfg.candidate_pool_size) +
                      " cannot cover all " + std::to_string(cfg.n_classes()) + " classes");
  }
  if (cfg.contexts_per_caption > cfg.context_bank_size) {
    throw ConfigError("contexts_per_caption exceeds context_bank_size");
  }
  if (cfg.sigma_img < 0 || cfg.sigma_txt < 0 || cfg.context_strength < 0 ||
      cfg.template_offset_scale < 0 || cfg.image_context_strength < 0) {
    throw ConfigError("noise scales and strengths must be non-negative");
  }
}

Matrix random_rotation(std::uint64_t seed, std::size_t d) {
  if (d < 1) throw InvalidArgumentError("random_rotation: d must be >= 1");
  constexpr int kMaxAttempts = 8;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    RandomStream rng(attempt == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    // Columns are stored as rows of q while orthogonalizing.
    Matrix q(d, d, gaussian_vector(rng, d * d));
    bool dependent = false;
    for (std::size_t j = 0; j < d && !dependent; ++j) {
      auto col = q.row(j);
      const double original = l2_norm(col);
      // Two modified Gram-Schmidt passes keep orthogonality near machine precision.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
          const double r = dot(q.row(i), col);
          auto qi = q.row(i);
          for (std::size_t k = 0; k < d; ++k) col[k] -= r * qi[k];
        }
      }
      const double n = l2_norm(col);
      if (!(n > 1e-8 * original)) {
        dependent = true;
        break;
      }
      for (double& x : col) x /= n;  // positive pivot
    }
    if (!dependent) return transpose(q);
  }
  throw InvalidArgumentError("random_rotation: numerically dependent draws after 8 attempts");
}

Vector SyntheticWorld::class_text(ClassId c) const {
  return matvec(text_lift, prototypes.row(static_cast<std::size_t>(c)));
}

Vector SyntheticWorld::class_image(ClassId c) const {
  return matvec(image_lift, prototypes.row(static_cast<std::size_t>(c)));
}

SyntheticWorld make_world(const GenConfig& cfg) {
  validate(cfg);
  SyntheticWorld w;
  w.config = cfg;

  RandomStream proto_rng(derive_seed(cfg.seed, kPrototypes));
  w.prototypes = Matrix(cfg.n_classes(), cfg.d_latent);
  for (std::size_t c = 0; c < cfg.n_classes(); ++c) {
    w.prototypes.set_row(c, l2_normalize(gaussian_vector(proto_rng, cfg.d_latent)));
  }

  RandomStream img_rng(derive_seed(cfg.seed, kImageLift));
  w.image_lift = Matrix(cfg.d_img_raw, cfg.d_latent, gaussian_vector(img_rng, cfg.d_img_raw * cfg.d_latent));
  RandomStream txt_rng(derive_seed(cfg.seed, kTextLift));
  w.text_lift = Matrix(cfg.d_txt_raw, cfg.d_latent, gaussian_vector(txt_rng, cfg.d_txt_raw * cfg.d_latent));

  RandomStream ctx_rng(derive_seed(cfg.seed, kContextBank));
  w.context_latent = Matrix(cfg.context_bank_size, cfg.d_latent);
  w.context_bank = Matrix(cfg.context_bank_size, cfg.d_txt_raw);
  w.context_image = Matrix(cfg.context_bank_size, cfg.d_img_raw);
  for (std::size_t j = 0; j < cfg.context_bank_size; ++j) {
    w.context_latent.set_row(j, l2_normalize(gaussian_vector(ctx_rng, cfg.d_latent)));
    w.context_bank.set_row(j, matvec(w.text_lift, w.context_latent.row(j)));
    w.context_image.set_row(j, matvec(w.image_lift, w.context_latent.row(j)));
  }

  RandomStream tmpl_rng(derive_seed(cfg.seed, kTemplate));
  w.template_offset = gaussian_vector(tmpl_rng, cfg.d_txt_raw, cfg.template_offset_scale);

  const std::uint64_t rot_seed = derive_seed(cfg.seed, kRotation);
  w.domain_transforms.reserve(cfg.n_domains);
  Matrix identity(cfg.d_img_raw, cfg.d_img_raw);
  for (std::size_t i = 0; i < cfg.d_img_raw; ++i) identity(i, i) = 1.0;
  w.domain_transforms.push_back(std::move(identity));
  for (std::size_t d = 1; d < cfg.n_domains; ++d) {
    w.domain_transforms.push_back(random_rotation(rot_seed ^ d, cfg.d_img_raw));
  }
  return w;
}

std::vector<std::size_t> context_indices(const SyntheticWorld& world, SampleId id,
                                         std::uint64_t seed) {
  const GenConfig& cfg = world.config;
  RandomStream rng(derive_seed(derive_seed(seed, kContexts), static_cast<std::uint64_t>(id)));
  // Partial Fisher-Yates over the bank indices.
  std::vector<std::size_t> pick(cfg.context_bank_size);
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  for (std::size_t i = 0; i < cfg.contexts_per_caption; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(pick.size() - i));
    std::swap(pick[i], pick[j]);
  }
  pick.resize(cfg.contexts_per_caption);
  return pick;
}

namespace {

void check_class(const GenConfig& cfg, ClassId c) {
  if (c < 0 || static_cast<std::size_t>(c) >= cfg.n_classes()) {
    throw InvalidArgumentError("unknown class " + std::to_string(c));
  }
}

}  // namespace

Vector synth_image(const SyntheticWorld& world, ClassId c, std::size_t domain, SampleId id,
                   std::uint64_t seed, RandomStream& noise) {
  const GenConfig& cfg = world.config;
  check_class(cfg, c);
  if (domain >= world.domain_transforms.size()) {
    throw InvalidArgumentError("unknown domain " + std::to_string(domain));
  }
  Vector x = world.class_image(c);
  if (cfg.image_context_strength != 0.0) {
    for (std::size_t j : context_indices(world, id, seed)) {
      auto a = world.context_image.row(j);
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += cfg.image_context_strength * a[k];
    }
  }
  for (double& v : x) v += cfg.sigma_img * noise.gaussian();
  if (domain == 0) return x;
  return matvec(world.domain_transforms[domain], x);
}

Vector synth_caption(const SyntheticWorld& world, ClassId c, SampleId id, std::uint64_t seed) {
  const GenConfig& cfg = world.config;
  check_class(cfg, c);
  Vector t = world.class_text(c);
  for (std::size_t j : context_indices(world, id, seed)) {
    auto kappa = world.context_bank.row(j);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] += cfg.context_strength * kappa[k];
  }
  RandomStream rng(derive_seed(derive_seed(seed, kCaptions), static_cast<std::uint64_t>(id)));
  for (double& x : t) x += cfg.sigma_txt * rng.gaussian();
  return t;
}

std::optional<Vector> SyntheticCaptionProvider::caption(const Sample& sample) const {
  return synth_caption(world_, sample.class_id, sample.id, seed_);
}

std::vector<std::int64_t> BenchmarkBundle::ds_domains() const {
  std::vector<std::int64_t> out;
  for (std::size_t d = 1; d < config.n_domains; ++d) out.push_back(static_cast<std::int64_t>(d));
  return out;
}

namespace {

struct IdCounter {
  SampleId next = 0;
  SampleId operator()() { return next++; }
};

std::vector<Sample> draw_samples(const SyntheticWorld& w, std::span<const ClassId> classes,
                                 std::size_t domain, std::size_t per_class, std::uint64_t seed,
                                 IdCounter& ids) {
  RandomStream rng(seed);
  std::vector<Sample> out;
  out.reserve(classes.size() * per_class);
  for (ClassId c : classes) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const SampleId id = ids();
      out.push_back({id, synth_image(w, c, domain, id, w.config.seed, rng), c,
                     static_cast<std::int64_t>(domain)});
    }
  }
  return out;
}

PromptTable make_prompts(const SyntheticWorld& w, std::span<const ClassId> classes) {
  Matrix features(classes.size(), w.config.d_txt_raw);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    features.set_row(i, add(w.class_text(classes[i]), w.template_offset));
  }
  return PromptTable(std::vector<ClassId>(classes.begin(), classes.end()), std::move(features));
}

}  // namespace

BenchmarkBundle generate_benchmark(const GenConfig& cfg) {
  const SyntheticWorld world = make_world(cfg);
  BenchmarkBundle b;
  b.config = cfg;
  for (std::size_t c = 0; c < cfg.n_id_classes; ++c) b.id_classes.push_back(static_cast<ClassId>(c));
  for (std::size_t c = 0; c < cfg.n_zsl_classes; ++c) {
    b.zsl_classes.push_back(static_cast<ClassId>(cfg.n_id_classes + c));
  }
  std::vector<ClassId> all = b.id_classes;
  all.insert(all.end(), b.zsl_classes.begin(), b.zsl_classes.end());

  IdCounter ids;
  const std::uint64_t caption_seed = cfg.seed;

  {
    RandomStream rng(derive_seed(cfg.seed, kPretrain));
    for (std::size_t d = 0; d < cfg.n_domains; ++d) {
      for (ClassId c : all) {
        for (std::size_t i = 0; i < cfg.pretrain_per_class; ++i) {
          const SampleId id = ids();
          Vector x = synth_image(world, c, d, id, caption_seed, rng);
          b.pretrain_pool.push_back(
              {id, std::move(x), synth_caption(world, c, id, caption_seed), c,
               static_cast<std::int64_t>(d)});
        }
      }
    }
  }

  b.finetune = draw_samples(world, b.id_classes, 0, cfg.finetune_per_class,
                            derive_seed(cfg.seed, kFinetune), ids);
  b.captions = attach_captions(b.finetune, SyntheticCaptionProvider(world, caption_seed));
  b.id_prompts = make_prompts(world, b.id_classes);
  b.zsl_prompts = make_prompts(world, b.zsl_classes);

  {
    RandomStream rng(derive_seed(cfg.seed, kCandidates));
    for (std::size_t i = 0; i < cfg.candidate_pool_size; ++i) {
      const ClassId c = all[i % all.size()];
      const SampleId id = ids();
      Vector x = synth_image(world, c, 0, id, caption_seed, rng);
      b.candidates.push_back({id, std::move(x), synth_caption(world, c, id, caption_seed), c, 0});
    }
  }

  b.id_test = draw_samples(world, b.id_classes, 0, cfg.test_per_class,
                           derive_seed(cfg.seed, kIdTest), ids);
  for (std::size_t d = 1; d < cfg.n_domains; ++d) {
    auto part = draw_samples(world, b.id_classes, d, cfg.test_per_class,
                             derive_seed(derive_seed(cfg.seed, kDsTest), d), ids);
    b.ds_test.insert(b.ds_test.end(), part.begin(), part.end());
  }
  b.zsl_test = draw_samples(world, b.zsl_classes, 0, cfg.test_per_class,
                            derive_seed(cfg.seed, kZslTest), ids);
  return b;
}

}  // namespace arf
