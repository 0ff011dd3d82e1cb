#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arf/anchors.hpp"
#include "arf/benchgen.hpp"
#include "arf/evaluation.hpp"
#include "arf/training.hpp"

namespace arf {

struct ManifestRecord {
  SampleId id = 0;
  std::optional<ClassId> class_id;
  std::optional<std::int64_t> domain_id;
  std::string kind;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

// Row i of matrix is the feature of manifest[i]. Ids are unique.
struct FeatureSet {
  std::vector<ManifestRecord> manifest;
  Matrix matrix;
};

inline constexpr std::uint32_t kMatrixVersion = 1;

// "ARFM", then u32 LE version, rows, cols, then rows * cols float32 LE values,
// row-major. Values are rounded to float on write; reading widens to double.
std::string encode_matrix(const Matrix& m);
// Throws BadMagicError, VersionUnsupportedError, IoError (truncated or trailing bytes).
Matrix decode_matrix(std::string_view bytes);

// One JSON object per line with keys in the order id, class_id, domain_id,
// kind; absent optional fields are omitted.
std::string encode_manifest(const std::vector<ManifestRecord>& manifest);
std::vector<ManifestRecord> decode_manifest(std::string_view text);

// Files <stem>.jsonl and <stem>.arfm inside dir.
void write_feature_set(const std::filesystem::path& dir, std::string_view stem,
                       const FeatureSet& fs);
// Throws RowCountMismatchError when manifest and matrix disagree, plus the
// matrix decoding errors.
FeatureSet read_feature_set(const std::filesystem::path& dir, std::string_view stem);

// Benchmark bundle as a directory of feature sets, captions and gen_config.json.
void write_bundle(const std::filesystem::path& dir, const BenchmarkBundle& bundle);
BenchmarkBundle read_bundle(const std::filesystem::path& dir);

// {"sample_id":..,"caption_feature":[..]} per line.
std::string encode_captions(std::span<const CaptionRecord> captions);
std::vector<CaptionRecord> decode_captions(std::string_view text);

// Caption provider backed by a captions JSONL file.
class FileCaptionProvider final : public CaptionProvider {
 public:
  explicit FileCaptionProvider(const std::filesystem::path& path);
  std::optional<Vector> caption(const Sample& sample) const override {
    return table_.caption(sample);
  }

 private:
  TableCaptionProvider table_;
};

// index.json plus feature sets index_image / index_text. Embeddings are
// stored at float precision, so rows are re-normalized when loaded.
void write_index(const std::filesystem::path& dir, const CandidateIndex& index);
CandidateIndex read_index(const std::filesystem::path& dir);

// {step, epoch, l_cl, l_cap, l_ret, total, skip_ret} per line.
std::string encode_training_log(const TrainingLog& log);

std::string encode_assignments(std::span<const RetrievalAssignment> assignments);

std::string encode_metrics(const Metrics& m);  // pretty JSON with trailing newline
Metrics decode_metrics(std::string_view text);

}  // namespace arf
