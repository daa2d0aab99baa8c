#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace topicflow::harness {

inline constexpr const char* kArtifactVersion = "topicflow 1.0.0";
inline constexpr int kManifestSchema = 1;

struct StageRecord {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  double wall_time_ms = 0.0;
};

struct FileDigest {
  std::string file;  // base name; directories are not part of the record
  std::string sha256;
};

// Transparency record of one pipeline run. `config` holds each stage's
// resolved configuration (defaults written out) under the stage name;
// config_digest is the SHA-256 of its canonical serialization.
struct RunManifest {
  std::string artifact_version = kArtifactVersion;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, FileDigest> input_digests;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<StageRecord> stages;
  std::string created_at;

  std::string config_digest() const;
  void add_file(const std::string& role, const std::filesystem::path& path);
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// Throws Error{InvalidArgument} when no stage has been recorded, IoError on
// write failure. Written to a temporary file and renamed into place.
void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

// Current UTC time as 2026-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace topicflow::harness
