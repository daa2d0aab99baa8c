#include "topicflow/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "topicflow/digest.hpp"
#include "topicflow/error.hpp"

namespace topicflow::harness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& code, const std::string& msg) { throw Error("harness", code, msg); }

}  // namespace

std::string RunManifest::config_digest() const { return sha256_hex(config.dump()); }

void RunManifest::add_file(const std::string& role, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail("IoError", "cannot digest missing file " + path.string());
  input_digests[role] = {path.filename().string(), sha256_file(path)};
}

json to_json(const RunManifest& m) {
  json j;
  j["schema"] = kManifestSchema;
  j["artifact_version"] = m.artifact_version;
  j["config"] = m.config;
  j["config_digest"] = m.config_digest();
  j["input_digests"] = json::object();
  for (const auto& [role, d] : m.input_digests) j["input_digests"][role] = {{"file", d.file}, {"sha256", d.sha256}};
  j["seeds"] = m.seeds;
  j["stages"] = json::array();
  for (const auto& s : m.stages)
    j["stages"].push_back({{"name", s.name}, {"params", s.params}, {"wall_time_ms", s.wall_time_ms}});
  j["created_at"] = m.created_at;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != kManifestSchema) fail("CorruptInput", "unsupported manifest schema");
    RunManifest m;
    m.artifact_version = j.at("artifact_version").get<std::string>();
    m.config = j.at("config");
    for (const auto& [role, d] : j.at("input_digests").items())
      m.input_digests[role] = {d.at("file").get<std::string>(), d.at("sha256").get<std::string>()};
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    for (const auto& s : j.at("stages"))
      m.stages.push_back({s.at("name").get<std::string>(), s.at("params"), s.at("wall_time_ms").get<double>()});
    m.created_at = j.at("created_at").get<std::string>();
    if (j.at("config_digest").get<std::string>() != m.config_digest())
      fail("CorruptInput", "manifest config_digest does not match its config");
    return m;
  } catch (const json::exception& e) {
    fail("CorruptInput", std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  if (m.stages.empty()) fail("InvalidArgument", "manifest has no stages");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail("IoError", "cannot write " + tmp.string());
    out << to_json(m).dump(2) << '\n';
    if (!out) fail("IoError", "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail("IoError", "cannot move manifest into place: " + ec.message());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("IoError", "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error&) {
    fail("CorruptInput", path.string() + " is not valid JSON");
  }
  return manifest_from_json(j);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace topicflow::harness
