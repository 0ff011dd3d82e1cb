#include "arf/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace arf {

using nlohmann::json;

std::string_view to_string(Provenance p) {
  return p == Provenance::pretrained ? "pretrained" : "finetuned";
}

std::string format_double(double value) {
  if (!std::isfinite(value)) throw InvalidArgumentError("cannot serialize a non-finite number");
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw InvalidArgumentError("number formatting failed");
  std::string s(buf.data(), end);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void append_array(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += ']';
}

void append_tower(std::string& out, const EncoderParams& t) {
  out += "{\"input_dim\":" + std::to_string(t.input_dim());
  out += ",\"hidden\":" + std::to_string(t.hidden());
  out += ",\"embed_dim\":" + std::to_string(t.embed_dim());
  out += ",\"w1\":";
  append_array(out, t.w1.values());
  out += ",\"b1\":";
  append_array(out, t.b1);
  out += ",\"w2\":";
  append_array(out, t.w2.values());
  out += ",\"b2\":";
  append_array(out, t.b2);
  out += '}';
}

// Everything after the id field; shared by the hash input and the document.
std::string body(const Checkpoint& c) {
  std::string out;
  out += "\"provenance\":\"" + std::string(to_string(c.provenance)) + "\"";
  out += ",\"config_fingerprint\":" + json(c.config_fingerprint).dump();
  out += ",\"params\":{\"log_tau\":" + format_double(c.params.log_tau);
  out += ",\"image\":";
  append_tower(out, c.params.image);
  out += ",\"text\":";
  append_tower(out, c.params.text);
  out += "}";
  return out;
}

std::string header() {
  return "{\"format\":\"arf-checkpoint\",\"version\":" + std::to_string(kCheckpointVersion);
}

std::string content_id(const Checkpoint& c) { return sha256_hex(header() + "," + body(c) + "}"); }

const json& field(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw MissingFieldError("checkpoint is missing field '" + std::string(where) + key + "'");
  }
  return obj.at(key);
}

double number(const json& obj, const char* key, std::string_view where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw MissingFieldError(std::string(where) + key + " is not a number");
  return v.get<double>();
}

Vector numbers(const json& obj, const char* key, std::string_view where) {
  const json& v = field(obj, key, where);
  if (!v.is_array()) throw MissingFieldError(std::string(where) + key + " is not an array");
  Vector out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw MissingFieldError(std::string(where) + key + " holds a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

EncoderParams parse_tower(const json& j, std::string_view where) {
  const auto input = static_cast<std::size_t>(number(j, "input_dim", where));
  const auto hidden = static_cast<std::size_t>(number(j, "hidden", where));
  const auto embed = static_cast<std::size_t>(number(j, "embed_dim", where));
  EncoderParams t;
  t.w1 = Matrix(hidden, input, numbers(j, "w1", where));
  t.b1 = numbers(j, "b1", where);
  t.w2 = Matrix(embed, hidden, numbers(j, "w2", where));
  t.b2 = numbers(j, "b2", where);
  return t;
}

}  // namespace

Checkpoint make_checkpoint(DualEncoderParams params, std::string config_fingerprint,
                           Provenance provenance) {
  Checkpoint c{std::move(params), std::move(config_fingerprint), provenance, {}};
  c.id = content_id(c);
  return c;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  return header() + ",\"id\":\"" + content_id(c) + "\"," + body(c) + "}\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgumentError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const double version = number(doc, "version", "");
  if (version != kCheckpointVersion) {
    throw VersionUnsupportedError("checkpoint version " + field(doc, "version", "").dump() +
                                  " is not supported");
  }
  const json& stored_id = field(doc, "id", "");
  const json& prov = field(doc, "provenance", "");
  const json& fp = field(doc, "config_fingerprint", "");
  const json& params = field(doc, "params", "");

  Checkpoint c;
  if (prov == "pretrained") {
    c.provenance = Provenance::pretrained;
  } else if (prov == "finetuned") {
    c.provenance = Provenance::finetuned;
  } else {
    throw InvalidArgumentError("unknown checkpoint provenance " + prov.dump());
  }
  c.config_fingerprint = fp.get<std::string>();
  c.params.log_tau = number(params, "log_tau", "params.");
  c.params.image = parse_tower(field(params, "image", "params."), "params.image.");
  c.params.text = parse_tower(field(params, "text", "params."), "params.text.");
  c.id = content_id(c);
  if (!stored_id.is_string() || stored_id.get<std::string>() != c.id) {
    throw HashMismatchError("checkpoint content hash does not match its id");
  }
  validate(c.params);
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace arf
