#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "arf/checkpoint.hpp"
#include "arf/cli.hpp"
#include "arf/config.hpp"
#include "arf/errors.hpp"
#include "arf/io.hpp"
#include "../support.hpp"

using namespace arf;
using arf::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "arf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

FeatureSet sample_set() {
  FeatureSet fs;
  RandomStream rng(1);
  for (int i = 0; i < 10; ++i) {
    ManifestRecord r{i * 3, i % 2 ? std::optional<ClassId>(i) : std::nullopt,
                     std::optional<std::int64_t>(i % 3), "finetune"};
    fs.manifest.push_back(r);
    fs.matrix.append_row(gaussian_vector(rng, 4));
  }
  return fs;
}

Checkpoint sample_checkpoint() {
  return make_checkpoint(init_params(7, {3, 2}, 4, 3), "fp", Provenance::finetuned);
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("matrix codec: layout, float rounding, errors") {
  const Matrix m(2, 3, std::vector<double>{1.0, -2.5, 0.1, 3e10, 0.0, 1.0 / 3});
  const std::string bytes = encode_matrix(m);
  REQUIRE(bytes.size() == 16 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "ARFM");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version, little endian
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // rows
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);  // cols
  const Matrix back = decode_matrix(bytes);
  CHECK(back.rows() == 2);
  CHECK(back.cols() == 3);
  for (std::size_t i = 0; i < m.size(); ++i)
    CHECK(back.values()[i] == static_cast<double>(static_cast<float>(m.values()[i])));
  CHECK(encode_matrix(back) == bytes);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_matrix(bad), BadMagicError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_matrix(bad), VersionUnsupportedError);
  CHECK_THROWS_AS(decode_matrix(bytes.substr(0, bytes.size() - 1)), IoError);
  CHECK_THROWS_AS(decode_matrix(bytes + "x"), IoError);
}

TEST_CASE("feature set round trip and row-count mismatch") {
  TempDir dir("fs");
  const FeatureSet fs = sample_set();
  write_feature_set(dir.path(), "set", fs);
  CHECK(fs::exists(dir.path() / "set.jsonl"));
  CHECK(fs::exists(dir.path() / "set.arfm"));
  const FeatureSet back = read_feature_set(dir.path(), "set");
  CHECK(back.manifest == fs.manifest);
  for (std::size_t i = 0; i < fs.matrix.size(); ++i)
    CHECK(back.matrix.values()[i] == static_cast<double>(static_cast<float>(fs.matrix.values()[i])));

  // Manifest keys appear in the documented order; absent class ids are omitted.
  const std::string manifest = read_file(dir.path() / "set.jsonl");
  CHECK(manifest.rfind("{\"id\":0,\"domain_id\":0,\"kind\":\"finetune\"}\n", 0) == 0);
  CHECK(manifest.find("{\"id\":3,\"class_id\":1,\"domain_id\":1,\"kind\":\"finetune\"}") !=
        std::string::npos);

  // 10 manifest lines against a 9-row matrix.
  Matrix nine;
  for (std::size_t r = 0; r < 9; ++r) nine.append_row(fs.matrix.row(r));
  write_bytes(dir.path() / "set.arfm", encode_matrix(nine));
  CHECK_THROWS_AS(read_feature_set(dir.path(), "set"), RowCountMismatchError);

  std::string corrupt = encode_matrix(fs.matrix);
  corrupt[1] = 'Q';
  write_bytes(dir.path() / "set.arfm", corrupt);
  CHECK_THROWS_AS(read_feature_set(dir.path(), "set"), BadMagicError);

  FeatureSet short_fs = fs;
  short_fs.manifest.pop_back();
  CHECK_THROWS_AS(write_feature_set(dir.path(), "x", short_fs), RowCountMismatchError);
  FeatureSet dup = fs;
  dup.manifest[1].id = dup.manifest[0].id;
  CHECK_THROWS(write_feature_set(dir.path(), "y", dup));
  CHECK_THROWS_AS(decode_manifest("{\"id\":1,\"kind\":\"x\",\"colour\":2}\n"), IoError);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  TempDir dir("ck");
  Checkpoint ck = sample_checkpoint();
  // Awkward doubles: subnormal, negative zero, long mantissas.
  ck.params.image.w1(0, 0) = 4.9e-324;
  ck.params.image.w1(0, 1) = -0.0;
  ck.params.text.b2[0] = 0.1 + 0.2;
  ck = make_checkpoint(ck.params, ck.config_fingerprint, ck.provenance);
  write_checkpoint(dir.path() / "c.json", ck);
  const Checkpoint back = read_checkpoint(dir.path() / "c.json");
  const auto a = parameter_blocks(ck.params);
  const auto b = parameter_blocks(back.params);
  for (std::size_t k = 0; k < a.size(); ++k)
    CHECK(std::memcmp(a[k].data(), b[k].data(), a[k].size_bytes()) == 0);
  CHECK(back.id == ck.id);
  CHECK(back.provenance == Provenance::finetuned);
  CHECK(back.config_fingerprint == "fp");
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));
  CHECK(ck.id.size() == 64);
  CHECK(ck.id.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("checkpoint corruption is detected") {
  const Checkpoint ck = sample_checkpoint();
  const std::string text = serialize_checkpoint(ck);

  // Tampered weight value.
  nlohmann::ordered_json doc = nlohmann::ordered_json::parse(text);
  doc["params"]["image"]["b2"][0] = 0.125;
  CHECK_THROWS_AS(parse_checkpoint(doc.dump()), HashMismatchError);

  nlohmann::ordered_json missing = nlohmann::ordered_json::parse(text);
  missing["params"].erase("log_tau");
  CHECK_THROWS_AS(parse_checkpoint(missing.dump()), MissingFieldError);

  nlohmann::ordered_json version = nlohmann::ordered_json::parse(text);
  version["version"] = 99;
  CHECK_THROWS_AS(parse_checkpoint(version.dump()), VersionUnsupportedError);
}

TEST_CASE("format_double and sha256") {
  CHECK(format_double(1.0) == "1.0");
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3)) == 1.0 / 3);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bundle and index round trips") {
  TempDir dir("bundle");
  GenConfig g;
  g.n_id_classes = 2;
  g.n_zsl_classes = 2;
  g.pretrain_per_class = 3;
  g.finetune_per_class = 3;
  g.test_per_class = 2;
  g.candidate_pool_size = 8;
  g.seed = 11;
  const BenchmarkBundle b = generate_benchmark(g);
  write_bundle(dir.path() / "b", b);
  const BenchmarkBundle r = read_bundle(dir.path() / "b");
  CHECK(r.config == g);
  CHECK(r.id_classes == b.id_classes);
  CHECK(r.zsl_classes == b.zsl_classes);
  CHECK(r.finetune.size() == b.finetune.size());
  CHECK(r.captions.size() == b.captions.size());
  for (std::size_t i = 0; i < b.finetune.size(); ++i) {
    CHECK(r.finetune[i].id == b.finetune[i].id);
    CHECK(r.finetune[i].class_id == b.finetune[i].class_id);
    CHECK(r.finetune[i].feature[0] == static_cast<double>(static_cast<float>(b.finetune[i].feature[0])));
  }
  CHECK(r.candidates.size() == b.candidates.size());
  CHECK(r.ds_test.size() == b.ds_test.size());

  const Checkpoint ck = make_checkpoint(init_params(0, b.input_dims(), 4, 3), "x", Provenance::pretrained);
  const CandidateIndex idx = build_candidate_index(ck, b.candidates);
  write_index(dir.path() / "i", idx);
  const CandidateIndex ri = read_index(dir.path() / "i");
  CHECK(ri.source_checkpoint_id == ck.id);
  CHECK(ri.candidate_ids == idx.candidate_ids);
  for (std::size_t i = 0; i < ri.size(); ++i) {
    CHECK(std::abs(l2_norm(ri.text_embeddings.row(i)) - 1.0) <= 1e-12);
    CHECK(std::abs(ri.text_embeddings(i, 0) - idx.text_embeddings(i, 0)) <= 1e-6);
  }

  const auto caps = decode_captions(encode_captions(b.captions));
  CHECK(caps == b.captions);
  write_bytes(dir.path() / "caps.jsonl", encode_captions(b.captions));
  const FileCaptionProvider provider(dir.path() / "caps.jsonl");
  CHECK(attach_captions(b.finetune, provider) == b.captions);
}

TEST_CASE("metrics codec round trip") {
  Metrics m{"cl,cap", {{"id", 40, 30, 75.0}, {"zsl", 40, 10, 25.0}}, 25.0};
  const Metrics back = decode_metrics(encode_metrics(m));
  CHECK(back.label == m.label);
  CHECK(back.splits.size() == 2);
  CHECK(back.splits[1].correct == 10);
  CHECK(*back.avg_ood == 25.0);
  Metrics none{"x", {{"id", 1, 1, 100.0}}, std::nullopt};
  CHECK_FALSE(decode_metrics(encode_metrics(none)).avg_ood.has_value());
}

TEST_CASE("run config: defaults file, strict keys, seed injection") {
  const std::string shipped = read_file(fs::path(ARF_SOURCE_DIR) / "configs" / "default.json");
  CHECK(shipped == dump_run_config(RunConfig{}));
  const RunConfig parsed = parse_run_config(shipped);
  CHECK(to_json(parsed) == to_json(RunConfig{}));

  CHECK_THROWS_AS(parse_run_config(R"({"gen": {"sigma_imgg": 0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"finetune": {"batch_size": "big"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"finetune": {"losses": "cl,zzz"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{"), ConfigError);

  const RunConfig c = parse_run_config(R"({"seed": 9, "finetune": {"retrieval_k": 3}})");
  CHECK(c.seed == 9);
  CHECK(c.finetune_config().seed == 9);
  CHECK(c.pretrain_config().seed == 9);
  CHECK(c.gen_config().seed == 9);
  CHECK(c.finetune_config().retrieval_k == 3);
}

TEST_CASE("cli: usage errors exit 1 with help text") {
  const CliRun unknown = cli({"train", "--no-such-flag"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("error:") != std::string::npos);
  CHECK(unknown.err.find("--losses") != std::string::npos);

  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train", "--losses", "cl,xyz", "--print-config"}).code == kExitUsage);
  CHECK(cli({"eval", "--bundle", "/nonexistent", "--checkpoint", "/nonexistent"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("cli: train --paper-defaults resolves the large-scale protocol") {
  const CliRun r = cli({"train", "--paper-defaults", "--print-config"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["finetune"]["learning_rate"].get<double>() == 1e-5);
  CHECK(j["finetune"]["weight_decay"].get<double>() == 0.1);
  CHECK(j["finetune"]["batch_size"].get<int>() == 512);
  CHECK(j["finetune"]["epochs"].get<int>() == 10);
}

TEST_CASE("cli: gradcheck --seed 0 passes") {
  const CliRun r = cli({"gradcheck", "--seed", "0"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(cli({"gradcheck", "--eps", "0.5"}).code == kExitUsage);
}

TEST_CASE("report: ds, zsl and ablation tables") {
  const std::vector<Metrics> runs{
      {"cl", {{"id", 10, 8, 80.0}, {"ds1", 10, 6, 60.0}, {"ds2", 10, 4, 40.0}, {"zsl", 10, 3, 30.0}}, 43.33},
      {"cl,cap,ret", {{"id", 10, 8, 80.0}, {"ds1", 10, 7, 70.0}, {"ds2", 10, 5, 50.0}, {"zsl", 10, 6, 60.0}}, 60.0}};
  CHECK(render_report(runs, ReportTable::ds, ReportFormat::csv) ==
        "Method,ID,ds1,ds2,Avg OOD\ncl,80.00,60.00,40.00,50.00\n\"cl,cap,ret\",80.00,70.00,50.00,60.00\n");
  CHECK(render_report(runs, ReportTable::zsl, ReportFormat::markdown) ==
        "| Method | ID | ZSL |\n| --- | ---: | ---: |\n| cl | 80.00 | 30.00 |\n| cl,cap,ret | 80.00 | 60.00 |\n");
  CHECK(render_report(runs, ReportTable::ablation, ReportFormat::csv) ==
        "L_CL,L_Cap,L_Ret,ID,DS,ZSL\nx,,,80.00,50.00,30.00\nx,x,x,80.00,60.00,60.00\n");
  const std::vector<Metrics> bad{{"baseline", {{"id", 1, 1, 100.0}}, std::nullopt}};
  CHECK_THROWS_AS(render_report(bad, ReportTable::ablation, ReportFormat::csv), InvalidArgumentError);
}
