#pragma once

#include "scuf/backbone.hpp"
#include "scuf/config.hpp"

#include <filesystem>
#include <memory>
#include <string>

namespace scuf {

// Checkpoint layout: one `<group>.bin` per parameter group plus `manifest.json` holding
// shapes, seed, step, the trainer config and the backbone config hash.
void save_checkpoint(Backbone& backbone, const std::filesystem::path& dir, const TrainerConfig& config, long step);

// Loads every group into an existing backbone. Throws DataError when the manifest's config hash
// differs from the backbone's, or when a stored shape disagrees with the live parameter.
void load_checkpoint(Backbone& backbone, const std::filesystem::path& dir);

// Trainer config recorded in a checkpoint manifest.
TrainerConfig read_checkpoint_config(const std::filesystem::path& dir);

// Builds a backbone from the manifest's config and loads all groups into it.
std::unique_ptr<Backbone> open_checkpoint(const std::filesystem::path& dir, TrainerConfig* config_out = nullptr);

std::string backbone_config_hash(const BackboneConfig& config);

// SHA-256 over every parameter value of a group, in declaration order.
std::string fingerprint(const std::vector<Parameter*>& params);

// Writes via a temporary file and rename so readers never see partial content.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace scuf
