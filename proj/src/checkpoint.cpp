#include "scuf/checkpoint.hpp"

#include "scuf/errors.hpp"
#include "scuf/hash.hpp"

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <json.hpp>

#include <fstream>
#include <sstream>

namespace scuf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TensorBlob {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(name, rows, cols, data);
  }
};

json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("checkpoint manifest missing in " + dir.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest unreadable: " + std::string(e.what()));
  }
}

}  // namespace

std::string backbone_config_hash(const BackboneConfig& config) { return sha256_hex(config.canonical()); }

std::string fingerprint(const std::vector<Parameter*>& params) {
  Sha256 h;
  for (const Parameter* p : params) {
    h.update(p->name);
    h.update(p->value);
  }
  return h.hex_digest();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_checkpoint(Backbone& backbone, const fs::path& dir, const TrainerConfig& config, long step) {
  fs::create_directories(dir);
  json manifest;
  manifest["config_hash"] = backbone_config_hash(backbone.config());
  manifest["backbone"] = backbone.config().canonical();
  manifest["trainer_config"] = config.to_text();
  manifest["seed"] = config.seed;
  manifest["step"] = step;
  for (const std::string& g : Backbone::group_names()) {
    std::vector<TensorBlob> blobs;
    json shapes = json::object();
    for (const Parameter* p : backbone.group(g)) {
      TensorBlob b{p->name, p->value.rows(), p->value.cols(),
                   std::vector<double>(p->value.data(), p->value.data() + p->value.size())};
      shapes[p->name] = {b.rows, b.cols};
      blobs.push_back(std::move(b));
    }
    std::ostringstream os(std::ios::binary);
    {
      cereal::PortableBinaryOutputArchive ar(os);
      ar(blobs);
    }
    write_file_atomic(dir / (g + ".bin"), os.str());
    manifest["groups"][g] = {{"file", g + ".bin"}, {"shapes", shapes}, {"sha256", fingerprint(backbone.group(g))}};
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

void load_checkpoint(Backbone& backbone, const fs::path& dir) {
  const json manifest = read_manifest(dir);
  const std::string expected = backbone_config_hash(backbone.config());
  if (manifest.value("config_hash", std::string()) != expected) {
    throw DataError("checkpoint " + dir.string() + " was written for a different backbone config (hash " +
                    manifest.value("config_hash", std::string("?")) + ", expected " + expected + ")");
  }
  for (const std::string& g : Backbone::group_names()) {
    std::ifstream in(dir / (g + ".bin"), std::ios::binary);
    if (!in) throw DataError("checkpoint group file missing: " + (dir / (g + ".bin")).string());
    std::vector<TensorBlob> blobs;
    try {
      cereal::PortableBinaryInputArchive ar(in);
      ar(blobs);
    } catch (const std::exception& e) {
      throw DataError("checkpoint group '" + g + "' unreadable: " + e.what());
    }
    std::vector<Parameter*> params = backbone.group(g);
    if (blobs.size() != params.size()) throw DataError("checkpoint group '" + g + "' has the wrong tensor count");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = *params[i];
      const TensorBlob& b = blobs[i];
      if (b.name != p.name || b.rows != p.value.rows() || b.cols != p.value.cols() ||
          b.data.size() != static_cast<std::size_t>(p.value.size())) {
        throw DataError("checkpoint tensor '" + b.name + "' does not match parameter '" + p.name + "'");
      }
      p.value = Eigen::Map<const Matrix>(b.data.data(), b.rows, b.cols);
    }
  }
}

TrainerConfig read_checkpoint_config(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  if (!manifest.contains("trainer_config")) throw DataError("checkpoint manifest lacks trainer_config");
  return TrainerConfig::parse(manifest["trainer_config"].get<std::string>(), (dir / "manifest.json").string());
}

std::unique_ptr<Backbone> open_checkpoint(const fs::path& dir, TrainerConfig* config_out) {
  TrainerConfig cfg = read_checkpoint_config(dir);
  auto backbone = std::make_unique<Backbone>(cfg.backbone());
  load_checkpoint(*backbone, dir);
  if (config_out) *config_out = cfg;
  return backbone;
}

}  // namespace scuf
