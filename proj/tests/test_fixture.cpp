#include "scuf/data.hpp"
#include "scuf/fixture.hpp"
#include "scuf/hash.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>

using namespace scuf;
using scuf::testing::temp_dir;
namespace fs = std::filesystem;

namespace {

FixtureOptions small() {
  FixtureOptions o;
  o.size = 32;
  o.train_pairs = 4;
  o.test_count = 8;
  o.classifier_count = 8;
  return o;
}

std::map<std::string, std::string> digest_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("fixture layout and determinism") {
  const auto a = temp_dir("fixture_a"), b = temp_dir("fixture_b"), c = temp_dir("fixture_c");
  const FixtureSummary s = write_fixture(a, small());
  CHECK(s.low == 4);
  CHECK(s.normal == 4);
  CHECK(s.test == 8);
  CHECK(s.classifier == 8);
  write_fixture(b, small());
  CHECK(digest_tree(a) == digest_tree(b));
  FixtureOptions other = small();
  other.seed = 8;
  write_fixture(c, other);
  CHECK(digest_tree(a) != digest_tree(c));

  const UnpairedDataset d = UnpairedDataset::load(a / "train");
  CHECK(d.low.size() == 4);
  CHECK(d.normal.size() == 4);
  CHECK(d.low[0].caption.rfind("a photo of a ", 0) == 0);
  CHECK(d.low[0].image.height == 32);

  const auto labels = load_labels(a / "test");
  CHECK(labels.size() == 8);
  CHECK(labels.at("test_0001") == 1);
  CHECK(load_labels(a / "classifier").size() == 8);

  std::ifstream in(a / "manifest.json");
  const auto m = nlohmann::json::parse(in);
  CHECK(m["seed"] == 7);
  CHECK(m["samples"].size() == 4 + 4 + 16 + 8);
  for (const auto& sample : m["samples"]) {
    CHECK(fs::exists(a / sample["path"].get<std::string>()));
    if (sample["split"] == "train_low") {
      CHECK(sample["gamma"].get<Real>() >= 2.5);
      CHECK(sample["gamma"].get<Real>() <= 4.0);
    }
  }
}

TEST_CASE("low-light test images are darker degradations of their ground truth") {
  const auto dir = temp_dir("fixture_pairs");
  write_fixture(dir, small());
  for (int i = 0; i < 8; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "test_%04d.png", i);
    const Image gt = load_image(dir / "test" / "gt" / stem);
    const Image low = load_image(dir / "test" / "low" / stem);
    CHECK(low.pixels.mean() < 0.6 * gt.pixels.mean());
  }
}

TEST_CASE("rendered shapes") {
  std::mt19937_64 rng(71);
  for (int label = 0; label < 4; ++label) {
    const RenderedShape s = render_shape(label, 64, rng);
    CHECK(s.label == label);
    CHECK(s.caption.find(shape_classes()[label]) != std::string::npos);
    CHECK_NOTHROW(validate_image(s.image));
  }
  CHECK_THROWS(render_shape(4, 64, rng));
}

TEST_CASE("fixture option validation") {
  const auto dir = temp_dir("fixture_bad");
  FixtureOptions o = small();
  o.size = 40;
  CHECK_THROWS_AS(write_fixture(dir, o), ConfigError);
  o = small();
  o.gamma_min = 1.0;
  CHECK_THROWS_AS(write_fixture(dir, o), ConfigError);
  CHECK_THROWS_AS(load_labels(dir / "nowhere"), DataError);
  fs::create_directories(dir / "bad");
  std::ofstream(dir / "bad" / "labels.json") << R"({"x": "hexagon"})";
  CHECK_THROWS_AS(load_labels(dir / "bad"), DataError);
}
