#include "arf/io.hpp"

#include <bit>
#include <cstring>
#include <unordered_set>

#include "arf/checkpoint.hpp"
#include "arf/config.hpp"
#include "arf/errors.hpp"

namespace arf {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'R', 'F', 'M'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    ++line_no;
    if (!line.empty()) f(line, line_no);
    pos = nl + 1;
  }
}

Json parse_json_line(std::string_view line, std::size_t line_no, const char* what) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error&) {
    throw IoError(std::string(what) + " line " + std::to_string(line_no) + " is not valid JSON");
  }
}

const Json& require(const Json& j, const char* key, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) throw MissingFieldError(std::string(what) + " record lacks '" + key + "'");
  return *it;
}

std::int64_t as_int(const Json& v, const char* key) {
  if (!v.is_number_integer()) throw IoError(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

Vector as_vector(const Json& v, const char* key) {
  if (!v.is_array()) throw IoError(std::string("field '") + key + "' must be an array");
  Vector out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw IoError(std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::string stem_file(std::string_view stem, const char* ext) { return std::string(stem) + ext; }

FeatureSet samples_to_set(std::span<const Sample> samples, const char* kind, std::size_t dim) {
  FeatureSet fs;
  fs.matrix = Matrix(0, dim);
  for (const auto& s : samples) {
    fs.manifest.push_back({s.id, s.class_id, s.domain_id, kind});
    fs.matrix.append_row(s.feature);
  }
  return fs;
}

std::vector<Sample> set_to_samples(const FeatureSet& fs) {
  std::vector<Sample> out;
  out.reserve(fs.manifest.size());
  for (std::size_t i = 0; i < fs.manifest.size(); ++i) {
    const auto& r = fs.manifest[i];
    if (!r.class_id || !r.domain_id) {
      throw MissingFieldError("sample record " + std::to_string(r.id) + " needs class_id and domain_id");
    }
    const auto row = fs.matrix.row(i);
    out.push_back({r.id, Vector(row.begin(), row.end()), *r.class_id, *r.domain_id});
  }
  return out;
}

void write_pairs(const fs::path& dir, std::string_view stem, std::span<const CandidatePair> pairs,
                 const char* kind, InputDims dims) {
  FeatureSet img, txt;
  img.matrix = Matrix(0, dims.image);
  txt.matrix = Matrix(0, dims.text);
  for (const auto& p : pairs) {
    const ManifestRecord r{p.id, p.class_id, p.domain_id, kind};
    img.manifest.push_back(r);
    txt.manifest.push_back(r);
    img.matrix.append_row(p.image_feature);
    txt.matrix.append_row(p.text_feature);
  }
  write_feature_set(dir, std::string(stem) + "_image", img);
  write_feature_set(dir, std::string(stem) + "_text", txt);
}

std::vector<CandidatePair> read_pairs(const fs::path& dir, std::string_view stem) {
  const auto img = read_feature_set(dir, std::string(stem) + "_image");
  const auto txt = read_feature_set(dir, std::string(stem) + "_text");
  if (img.manifest != txt.manifest) {
    throw RowCountMismatchError(std::string(stem) + ": image and text manifests differ");
  }
  std::vector<CandidatePair> out;
  out.reserve(img.manifest.size());
  for (std::size_t i = 0; i < img.manifest.size(); ++i) {
    const auto& r = img.manifest[i];
    const auto a = img.matrix.row(i);
    const auto b = txt.matrix.row(i);
    out.push_back({r.id, Vector(a.begin(), a.end()), Vector(b.begin(), b.end()), r.class_id,
                   r.domain_id.value_or(0)});
  }
  return out;
}

FeatureSet prompts_to_set(const PromptTable& table, const char* kind) {
  FeatureSet fs;
  fs.matrix = table.prompt_features();
  for (ClassId c : table.class_ids()) fs.manifest.push_back({c, c, std::nullopt, kind});
  return fs;
}

PromptTable set_to_prompts(const FeatureSet& fs) {
  std::vector<ClassId> ids;
  for (const auto& r : fs.manifest) ids.push_back(r.id);
  return PromptTable(std::move(ids), fs.matrix);
}

}  // namespace

std::string encode_matrix(const Matrix& m) {
  if (m.rows() > 0xFFFFFFFFu || m.cols() > 0xFFFFFFFFu) {
    throw InvalidArgumentError("matrix too large for the ARFM format");
  }
  std::string out(kMagic, 4);
  put_u32(out, kMatrixVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(kHeaderBytes + 4 * m.values().size());
  for (double v : m.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Matrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("matrix file does not start with ARFM");
  }
  if (bytes.size() < kHeaderBytes) throw IoError("matrix header is truncated");
  const auto version = get_u32(bytes, 4);
  if (version != kMatrixVersion) {
    throw VersionUnsupportedError("matrix format version " + std::to_string(version) +
                                  " is not supported");
  }
  const std::size_t rows = get_u32(bytes, 8);
  const std::size_t cols = get_u32(bytes, 12);
  const std::size_t expected = kHeaderBytes + 4 * rows * cols;
  if (bytes.size() != expected) {
    throw IoError("matrix payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(expected));
  }
  Matrix m(rows, cols);
  auto values = m.values();
  for (std::size_t i = 0; i < rows * cols; ++i) {
    values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i)));
  }
  return m;
}

std::string encode_manifest(const std::vector<ManifestRecord>& manifest) {
  std::string out;
  for (const auto& r : manifest) {
    Json j;
    j["id"] = r.id;
    if (r.class_id) j["class_id"] = *r.class_id;
    if (r.domain_id) j["domain_id"] = *r.domain_id;
    j["kind"] = r.kind;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ManifestRecord> decode_manifest(std::string_view text) {
  std::vector<ManifestRecord> out;
  for_each_line(text, [&](std::string_view line, std::size_t n) {
    const Json j = parse_json_line(line, n, "manifest");
    if (!j.is_object()) throw IoError("manifest line " + std::to_string(n) + " is not an object");
    ManifestRecord r;
    r.id = as_int(require(j, "id", "manifest"), "id");
    const Json& kind = require(j, "kind", "manifest");
    if (!kind.is_string()) throw IoError("field 'kind' must be a string");
    r.kind = kind.get<std::string>();
    if (auto it = j.find("class_id"); it != j.end()) r.class_id = as_int(*it, "class_id");
    if (auto it = j.find("domain_id"); it != j.end()) r.domain_id = as_int(*it, "domain_id");
    for (const auto& [k, v] : j.items()) {
      if (k != "id" && k != "class_id" && k != "domain_id" && k != "kind") {
        throw IoError("manifest line " + std::to_string(n) + " has unknown key '" + k + "'");
      }
    }
    out.push_back(std::move(r));
  });
  return out;
}

void write_feature_set(const fs::path& dir, std::string_view stem, const FeatureSet& set) {
  if (set.manifest.size() != set.matrix.rows()) {
    throw RowCountMismatchError("feature set '" + std::string(stem) + "' has " +
                                std::to_string(set.manifest.size()) + " records but " +
                                std::to_string(set.matrix.rows()) + " rows");
  }
  std::unordered_set<SampleId> ids;
  for (const auto& r : set.manifest) {
    if (!ids.insert(r.id).second) {
      throw InvalidArgumentError("duplicate id " + std::to_string(r.id) + " in feature set");
    }
  }
  fs::create_directories(dir);
  write_file_atomic(dir / stem_file(stem, ".jsonl"), encode_manifest(set.manifest));
  write_file_atomic(dir / stem_file(stem, ".arfm"), encode_matrix(set.matrix));
}

FeatureSet read_feature_set(const fs::path& dir, std::string_view stem) {
  FeatureSet set;
  set.manifest = decode_manifest(read_file(dir / stem_file(stem, ".jsonl")));
  set.matrix = decode_matrix(read_file(dir / stem_file(stem, ".arfm")));
  if (set.manifest.size() != set.matrix.rows()) {
    throw RowCountMismatchError("feature set '" + std::string(stem) + "': manifest has " +
                                std::to_string(set.manifest.size()) + " records, matrix has " +
                                std::to_string(set.matrix.rows()) + " rows");
  }
  return set;
}

std::string encode_captions(std::span<const CaptionRecord> captions) {
  std::string out;
  for (const auto& c : captions) {
    Json j;
    j["sample_id"] = c.sample_id;
    j["caption_feature"] = c.caption_feature;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<CaptionRecord> decode_captions(std::string_view text) {
  std::vector<CaptionRecord> out;
  for_each_line(text, [&](std::string_view line, std::size_t n) {
    const Json j = parse_json_line(line, n, "captions");
    out.push_back({as_int(require(j, "sample_id", "caption"), "sample_id"),
                   as_vector(require(j, "caption_feature", "caption"), "caption_feature")});
  });
  return out;
}

FileCaptionProvider::FileCaptionProvider(const fs::path& path)
    : table_(decode_captions(read_file(path))) {}

void write_bundle(const fs::path& dir, const BenchmarkBundle& b) {
  fs::create_directories(dir);
  const InputDims dims = b.input_dims();
  write_file_atomic(dir / "gen_config.json", to_json(b.config).dump(2) + "\n");
  write_pairs(dir, "pretrain_pool", b.pretrain_pool, "pretrain", dims);
  write_feature_set(dir, "finetune", samples_to_set(b.finetune, "finetune", dims.image));
  write_file_atomic(dir / "captions.jsonl", encode_captions(b.captions));
  write_feature_set(dir, "id_prompts", prompts_to_set(b.id_prompts, "id_prompt"));
  write_feature_set(dir, "zsl_prompts", prompts_to_set(b.zsl_prompts, "zsl_prompt"));
  write_pairs(dir, "candidates", b.candidates, "candidate", dims);
  write_feature_set(dir, "id_test", samples_to_set(b.id_test, "id_test", dims.image));
  write_feature_set(dir, "ds_test", samples_to_set(b.ds_test, "ds_test", dims.image));
  write_feature_set(dir, "zsl_test", samples_to_set(b.zsl_test, "zsl_test", dims.image));
}

BenchmarkBundle read_bundle(const fs::path& dir) {
  BenchmarkBundle b;
  try {
    b.config = gen_config_from_json(Json::parse(read_file(dir / "gen_config.json")));
  } catch (const Json::parse_error&) {
    throw IoError("gen_config.json in " + dir.string() + " is not valid JSON");
  }
  b.pretrain_pool = read_pairs(dir, "pretrain_pool");
  b.finetune = set_to_samples(read_feature_set(dir, "finetune"));
  b.captions = decode_captions(read_file(dir / "captions.jsonl"));
  b.id_prompts = set_to_prompts(read_feature_set(dir, "id_prompts"));
  b.zsl_prompts = set_to_prompts(read_feature_set(dir, "zsl_prompts"));
  b.id_classes = b.id_prompts.class_ids();
  b.zsl_classes = b.zsl_prompts.class_ids();
  b.candidates = read_pairs(dir, "candidates");
  b.id_test = set_to_samples(read_feature_set(dir, "id_test"));
  b.ds_test = set_to_samples(read_feature_set(dir, "ds_test"));
  b.zsl_test = set_to_samples(read_feature_set(dir, "zsl_test"));
  return b;
}

void write_index(const fs::path& dir, const CandidateIndex& index) {
  if (index.image_embeddings.rows() != index.size() || index.text_embeddings.rows() != index.size()) {
    throw RowCountMismatchError("index rows do not match its candidate ids");
  }
  FeatureSet img, txt;
  img.matrix = index.image_embeddings;
  txt.matrix = index.text_embeddings;
  for (SampleId id : index.candidate_ids) {
    img.manifest.push_back({id, std::nullopt, std::nullopt, "index_image"});
    txt.manifest.push_back({id, std::nullopt, std::nullopt, "index_text"});
  }
  fs::create_directories(dir);
  Json meta;
  meta["format"] = "arf-index";
  meta["version"] = 1;
  meta["source_checkpoint_id"] = index.source_checkpoint_id;
  meta["rows"] = index.size();
  write_feature_set(dir, "index_image", img);
  write_feature_set(dir, "index_text", txt);
  write_file_atomic(dir / "index.json", meta.dump(2) + "\n");
}

CandidateIndex read_index(const fs::path& dir) {
  Json meta;
  try {
    meta = Json::parse(read_file(dir / "index.json"));
  } catch (const Json::parse_error&) {
    throw IoError("index.json in " + dir.string() + " is not valid JSON");
  }
  if (meta.value("format", std::string()) != "arf-index") throw BadMagicError("not an index directory");
  if (meta.value("version", 0) != 1) throw VersionUnsupportedError("index version not supported");
  const Json& src = require(meta, "source_checkpoint_id", "index");
  if (!src.is_string()) throw IoError("source_checkpoint_id must be a string");

  const auto img = read_feature_set(dir, "index_image");
  const auto txt = read_feature_set(dir, "index_text");
  if (img.manifest.size() != txt.manifest.size()) {
    throw RowCountMismatchError("index image and text sets differ in length");
  }
  CandidateIndex index;
  index.source_checkpoint_id = src.get<std::string>();
  index.image_embeddings = Matrix(0, img.matrix.cols());
  index.text_embeddings = Matrix(0, txt.matrix.cols());
  for (std::size_t i = 0; i < img.manifest.size(); ++i) {
    if (img.manifest[i].id != txt.manifest[i].id) {
      throw RowCountMismatchError("index image and text ids differ at row " + std::to_string(i));
    }
    index.candidate_ids.push_back(img.manifest[i].id);
    index.image_embeddings.append_row(l2_normalize(img.matrix.row(i)));
    index.text_embeddings.append_row(l2_normalize(txt.matrix.row(i)));
  }
  return index;
}

std::string encode_training_log(const TrainingLog& log) {
  std::string out;
  for (const auto& r : log) {
    Json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["l_cl"] = r.loss.l_cl;
    j["l_cap"] = r.loss.l_cap;
    j["l_ret"] = r.loss.l_ret;
    j["total"] = r.loss.total;
    j["skip_ret"] = r.loss.skip_ret;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string encode_assignments(std::span<const RetrievalAssignment> assignments) {
  std::string out;
  for (const auto& a : assignments) {
    Json j;
    j["query_sample_id"] = a.query_sample_id;
    j["candidate_id"] = a.candidate_id;
    j["score"] = a.score;
    j["mode"] = std::string(to_string(a.mode));
    j["rank"] = a.rank;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string encode_metrics(const Metrics& m) {
  Json j;
  j["label"] = m.label;
  Json splits = Json::array();
  for (const auto& s : m.splits) {
    splits.push_back(Json{{"split", s.split_name},
                          {"n", s.n},
                          {"correct", s.correct},
                          {"accuracy_percent", s.accuracy_percent}});
  }
  j["splits"] = std::move(splits);
  j["avg_ood"] = m.avg_ood ? Json(*m.avg_ood) : Json(nullptr);
  return j.dump(2) + "\n";
}

Metrics decode_metrics(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error&) {
    throw IoError("metrics file is not valid JSON");
  }
  Metrics m;
  const Json& label = require(j, "label", "metrics");
  if (!label.is_string()) throw IoError("metrics label must be a string");
  m.label = label.get<std::string>();
  const Json& splits = require(j, "splits", "metrics");
  if (!splits.is_array()) throw IoError("metrics splits must be an array");
  for (const auto& s : splits) {
    SplitMetrics sm;
    const Json& name = require(s, "split", "split");
    if (!name.is_string()) throw IoError("split name must be a string");
    sm.split_name = name.get<std::string>();
    sm.n = static_cast<std::size_t>(as_int(require(s, "n", "split"), "n"));
    sm.correct = static_cast<std::size_t>(as_int(require(s, "correct", "split"), "correct"));
    const Json& acc = require(s, "accuracy_percent", "split");
    if (!acc.is_number()) throw IoError("accuracy_percent must be a number");
    sm.accuracy_percent = acc.get<double>();
    m.splits.push_back(std::move(sm));
  }
  if (auto it = j.find("avg_ood"); it != j.end() && it->is_number()) m.avg_ood = it->get<double>();
  return m;
}

}  // namespace arf
