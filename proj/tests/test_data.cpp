#include "scuf/data.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace scuf;
using scuf::testing::temp_dir;

namespace {

Sample sample(Real v, int size = 16) { return Sample{Image::constant(size, size, v), "c", {}}; }

}  // namespace

TEST_CASE("loading an unpaired directory") {
  const auto dir = temp_dir("data_load");
  std::filesystem::create_directories(dir / "low");
  std::filesystem::create_directories(dir / "normal");
  save_image(Image::constant(16, 16, 0.1), dir / "low" / "b.png");
  save_image(Image::constant(16, 16, 0.2), dir / "low" / "a.png");
  save_image(Image::constant(16, 16, 0.8), dir / "normal" / "n.png");
  std::ofstream(dir / "low" / "a.caption.txt") << "a photo of a red circle\n";
  std::ofstream(dir / "low" / "notes.txt") << "ignored";
  const UnpairedDataset d = UnpairedDataset::load(dir);
  REQUIRE(d.low.size() == 2);
  CHECK(d.low[0].path.filename() == "a.png");
  CHECK(d.low[0].caption == "a photo of a red circle");
  CHECK(d.low[1].caption == kFallbackCaption);
  CHECK(d.normal.size() == 1);
  CHECK(d.fingerprint_low() == UnpairedDataset::load(dir).fingerprint_low());
  CHECK(d.fingerprint_low() != d.fingerprint_normal());

  std::filesystem::remove(dir / "normal" / "n.png");
  CHECK_THROWS_AS(UnpairedDataset::load(dir), DataError);
  CHECK_THROWS_AS(UnpairedDataset::load(dir / "missing"), DataError);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(51);
  Image img(20, 24);
  img.pixels = scuf::testing::random_matrix(20 * 24, 3, rng, 0, 1);
  for (int i = 0; i < 10; ++i) {
    const Image out = augment(img, 16, rng);
    CHECK(out.height == 16);
    CHECK(out.width == 16);
  }
  const Image up = augment(Image::constant(8, 12, 0.3), 16, rng);
  CHECK(up.height == 16);
  CHECK((up.pixels.array() - 0.3).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("pair sampling is uniform, independent and seeded") {
  UnpairedDataset d;
  for (int i = 0; i < 4; ++i) d.low.push_back(sample(0.1 * i));
  for (int i = 0; i < 5; ++i) d.normal.push_back(sample(0.5 + 0.1 * i));
  std::mt19937_64 rng(52);
  const int n = 20000;
  std::vector<int> low(4), normal(5);
  std::vector<std::vector<int>> joint(4, std::vector<int>(5));
  for (int i = 0; i < n; ++i) {
    const TrainingPair p = sample_pair(d, 16, rng);
    ++low[p.low_index];
    ++normal[p.normal_index];
    ++joint[p.low_index][p.normal_index];
  }
  // Chi-square statistics against uniform marginals and the independent joint; critical values at p = 0.001.
  auto chi = [](const std::vector<int>& counts, Real expected) {
    Real s = 0;
    for (int c : counts) s += (c - expected) * (c - expected) / expected;
    return s;
  };
  CHECK(chi(low, n / 4.0) < 16.27);
  CHECK(chi(normal, n / 5.0) < 18.47);
  std::vector<int> flat;
  for (const auto& row : joint) flat.insert(flat.end(), row.begin(), row.end());
  CHECK(chi(flat, n / 20.0) < 43.82);

  std::mt19937_64 r1(9), r2(9);
  for (int i = 0; i < 5; ++i) {
    const TrainingPair a = sample_pair(d, 16, r1), b = sample_pair(d, 16, r2);
    CHECK(a.low_index == b.low_index);
    CHECK(a.normal.pixels == b.normal.pixels);
  }

  UnpairedDataset empty;
  empty.low.push_back(sample(0.1));
  CHECK_THROWS_AS(sample_pair(empty, 16, rng), DataError);
}
