#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "arf/benchgen.hpp"
#include "arf/evaluation.hpp"
#include "arf/training.hpp"

namespace arf {

using Json = nlohmann::ordered_json;

// Everything one pipeline run needs. A single seed drives generation,
// pretraining and finetuning, so the per-section seed fields are ignored.
struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig gen;
  ModelConfig model;
  TrainConfig pretrain = default_pretrain_config();
  TrainConfig finetune;
  EvalOptions eval;
  std::vector<double> alphas = default_alphas();

  GenConfig gen_config() const;
  TrainConfig pretrain_config() const;
  TrainConfig finetune_config() const;
};

// Sections: seed, gen, model, pretrain, finetune, eval, ensemble. Missing keys
// keep their defaults; unknown keys and wrongly typed values throw
// ConfigError naming the offending path.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
Json to_json(const RunConfig& cfg);
std::string dump_run_config(const RunConfig& cfg);  // 2-space indent, trailing newline

Json to_json(const GenConfig& cfg);  // includes seed
GenConfig gen_config_from_json(const Json& j);

std::string to_string(const SplitSelection& s);

}  // namespace arf
