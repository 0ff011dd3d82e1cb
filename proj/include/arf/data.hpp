#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "arf/numerics.hpp"

namespace arf {

using SampleId = std::int64_t;
using ClassId = std::int64_t;

// A labelled image: raw feature x, class y and the domain it was drawn from.
struct Sample {
  SampleId id = 0;
  Vector feature;
  ClassId class_id = 0;
  std::int64_t domain_id = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Raw text feature of the caption generated for one finetune sample.
struct CaptionRecord {
  SampleId sample_id = 0;
  Vector caption_feature;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

// An (image, text) pair from a retrieval corpus or the pretraining pool.
// class_id is generator metadata only; nothing in training reads it.
struct CandidatePair {
  SampleId id = 0;
  Vector image_feature;
  Vector text_feature;
  std::optional<ClassId> class_id;
  std::int64_t domain_id = 0;

  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

// One raw prompt feature ("a photo of a [CLASS]") per class.
class PromptTable {
 public:
  PromptTable() = default;
  PromptTable(std::vector<ClassId> class_ids, Matrix prompt_features);

  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }
  const Matrix& prompt_features() const noexcept { return features_; }
  std::size_t size() const noexcept { return class_ids_.size(); }

  bool contains(ClassId c) const { return row_of_.contains(c); }
  // Throws InvalidArgumentError for unknown classes.
  std::size_t row_of(ClassId c) const;
  std::span<const double> prompt(ClassId c) const { return features_.row(row_of(c)); }

 private:
  std::vector<ClassId> class_ids_;
  Matrix features_;
  std::unordered_map<ClassId, std::size_t> row_of_;
};

}  // namespace arf
