#include "scuf/manifest.hpp"

#include "scuf/checkpoint.hpp"

#include <chrono>
#include <ctime>

namespace scuf {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return {{"command_line", command_line},
          {"config_hash", config_hash},
          {"seed", seed},
          {"dataset_fingerprints", dataset_fingerprints},
          {"artifact_version", artifact_version},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"outcome", outcome},
          {"extra", extra}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command_line = j.value("command_line", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.dataset_fingerprints = j.value("dataset_fingerprints", std::map<std::string, std::string>{});
  m.artifact_version = j.value("artifact_version", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.outcome = j.value("outcome", "");
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

void RunManifest::start(const std::filesystem::path& path) {
  started_at = utc_timestamp();
  outcome = "running";
  write_file_atomic(path, to_json().dump(2) + "\n");
}

void RunManifest::finish(const std::filesystem::path& path, const std::string& result) {
  finished_at = utc_timestamp();
  outcome = result;
  write_file_atomic(path, to_json().dump(2) + "\n");
}

}  // namespace scuf
