#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace scuf {

inline constexpr const char* kArtifactVersion = "scuf-desk 0.1.0";

// Provenance record of one command invocation. Written when the run starts and rewritten with the
// outcome when it ends; both writes are atomic.
struct RunManifest {
  std::string command_line;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> dataset_fingerprints;
  std::string artifact_version = kArtifactVersion;
  std::string started_at;
  std::string finished_at;
  std::string outcome = "running";
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  void start(const std::filesystem::path& path);
  void finish(const std::filesystem::path& path, const std::string& outcome);
};

std::string utc_timestamp();

}  // namespace scuf
