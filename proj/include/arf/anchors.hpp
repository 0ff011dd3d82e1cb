#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "arf/checkpoint.hpp"
#include "arf/data.hpp"

namespace arf {

// Source of generated captions. Implementations must be deterministic; a
// missing caption is reported as nullopt.
class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::optional<Vector> caption(const Sample& sample) const = 0;
};

// Captions looked up by sample id, e.g. imported from a captions JSONL file.
class TableCaptionProvider final : public CaptionProvider {
 public:
  explicit TableCaptionProvider(std::span<const CaptionRecord> records);
  std::optional<Vector> caption(const Sample& sample) const override;

 private:
  std::unordered_map<SampleId, Vector> by_id_;
};

// One record per sample, in sample order. Throws MissingCaptionError.
std::vector<CaptionRecord> attach_captions(std::span<const Sample> samples,
                                           const CaptionProvider& provider);

// Embeddings of the retrieval corpus, computed once from a fixed checkpoint.
struct CandidateIndex {
  std::vector<SampleId> candidate_ids;
  Matrix image_embeddings;  // N x d, unit rows
  Matrix text_embeddings;   // N x d, unit rows
  std::string source_checkpoint_id;

  std::size_t size() const noexcept { return candidate_ids.size(); }
};

CandidateIndex build_candidate_index(const Checkpoint& ckpt,
                                     std::span<const CandidatePair> candidates);

// First letter: which tower embeds the query. Second letter: which side of
// the index it is compared against.
enum class RetrievalMode { v2t, v2v, t2t, t2v };

std::string_view to_string(RetrievalMode m);
RetrievalMode parse_retrieval_mode(std::string_view s);

struct RetrievalQuery {
  SampleId sample_id = 0;
  Vector feature;  // raw image feature for v*, raw text feature for t*
};

struct RetrievalAssignment {
  SampleId query_sample_id = 0;
  SampleId candidate_id = 0;
  double score = 0.0;
  RetrievalMode mode = RetrievalMode::v2t;
  std::size_t rank = 0;

  friend bool operator==(const RetrievalAssignment&, const RetrievalAssignment&) = default;
};

// Queries for a set of finetune samples: the image for v* modes, the
// sample's class prompt for t* modes.
std::vector<RetrievalQuery> make_retrieval_queries(std::span<const Sample> samples,
                                                   const PromptTable& prompts, RetrievalMode mode);

// Exact top-k by dot product. Results come in query order, then by
// descending score with ties going to the lower candidate id.
// Throws InvalidArgumentError for k outside [1, N] and
// CheckpointMismatchError when the index was built from another checkpoint.
std::vector<RetrievalAssignment> retrieve(const CandidateIndex& index,
                                          std::span<const RetrievalQuery> queries,
                                          const Checkpoint& ckpt, RetrievalMode mode,
                                          std::size_t k);

// Positions of the k best entries of scores, ordered by (-score, id).
std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::span<const SampleId> ids, std::size_t k);

enum class AnchorLayout { sep, merge };

std::string_view to_string(AnchorLayout l);
AnchorLayout parse_anchor_layout(std::string_view s);

// Raw (image, text) features of one anchor pair. Views into data owned by the
// caller (samples, captions, candidates); valid while those are.
struct RawPair {
  std::span<const double> image;
  std::span<const double> text;
};

struct AnchorBatch {
  std::vector<RawPair> caption_pairs;
  std::vector<RawPair> retrieved_pairs;
  std::vector<SampleId> retrieved_ids;  // candidate id of each retrieved pair
  AnchorLayout layout = AnchorLayout::sep;
  bool skip_ret = true;  // fewer than two unique retrieved pairs
};

// Lookup tables for assembling anchor batches during one finetuning run.
class AnchorSources {
 public:
  // assignments may be empty when retrieval anchors are not used.
  AnchorSources(std::span<const CaptionRecord> captions,
                std::span<const RetrievalAssignment> assignments,
                std::span<const CandidatePair> candidates);

  // Caption pairs in batch order. Retrieved candidates are deduplicated,
  // keeping the first occurrence in (batch, rank) order. merge puts the
  // unique retrieved pairs after the caption pairs in one list.
  // Throws MissingCaptionError / InvalidArgumentError for batch members
  // without a caption or (when with_retrieval) an assignment.
  AnchorBatch assemble(std::span<const Sample> batch, AnchorLayout layout,
                       bool with_retrieval) const;

 private:
  std::unordered_map<SampleId, const CaptionRecord*> captions_;
  std::unordered_map<SampleId, std::vector<SampleId>> assigned_;
  std::unordered_map<SampleId, const CandidatePair*> candidates_;
};

AnchorBatch assemble_anchor_batch(std::span<const Sample> batch,
                                  std::span<const CaptionRecord> captions,
                                  std::span<const RetrievalAssignment> assignments,
                                  std::span<const CandidatePair> candidates, AnchorLayout layout);

}  // namespace arf
