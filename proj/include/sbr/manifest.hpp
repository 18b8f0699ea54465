#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sbr {

inline constexpr const char* kToolVersion = "sbrest 1.0.0";

/// Lowercase hex SHA-256 of a file's bytes / of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_text(const std::string& text);

struct HashedFile {
  std::string path;  ///< as recorded (relative to the output directory when inside it)
  std::string sha256;
};

/// Record of one pipeline stage: what went in, what came out, and under which
/// seed, settings and tool version.
struct StageManifest {
  std::string stage;
  std::uint64_t seed = 0;
  std::string version = kToolVersion;
  std::string settings_sha256;  ///< hash of the stage's slice of the configuration
  std::vector<HashedFile> inputs;
  std::vector<HashedFile> outputs;

  /// Hash over stage, seed, version, settings and inputs; two runs that agree on
  /// it would compute the same outputs.
  std::string fingerprint() const;
};

void write_manifest(const std::filesystem::path& path, const StageManifest& manifest);
std::optional<StageManifest> read_manifest(const std::filesystem::path& path);

/// True when `recorded` has the same fingerprint as `expected` and every recorded
/// output still exists under `root` with its recorded hash.
bool manifest_current(const StageManifest& recorded, const StageManifest& expected, const std::filesystem::path& root);

}  // namespace sbr
