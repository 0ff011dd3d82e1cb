#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "arf/encoders.hpp"

namespace arf {

enum class Provenance { pretrained, finetuned };

std::string_view to_string(Provenance p);

// A parameter snapshot plus where it came from. id is the SHA-256 of the
// canonical serialization with the id field left out.
struct Checkpoint {
  DualEncoderParams params;
  std::string config_fingerprint;
  Provenance provenance = Provenance::pretrained;
  std::string id;
};

inline constexpr int kCheckpointVersion = 1;

Checkpoint make_checkpoint(DualEncoderParams params, std::string config_fingerprint,
                           Provenance provenance);

// Canonical JSON document. Keys appear in a fixed order and every double is
// written as the shortest decimal that parses back to the same bits.
std::string serialize_checkpoint(const Checkpoint& ckpt);

// Parses and verifies a checkpoint document.
// Throws MissingFieldError, VersionUnsupportedError or HashMismatchError.
Checkpoint parse_checkpoint(std::string_view text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

// Shortest round-trip decimal for a finite double. Integral values keep a
// trailing ".0" so that JSON readers see a floating-point number.
std::string format_double(double value);

// Atomic replace: the bytes go to a sibling temp file that is then renamed.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace arf
