#include "scuf/checkpoint.hpp"
#include "scuf/trainer.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>

using namespace scuf;
using scuf::testing::temp_dir;

namespace {

UnpairedDataset tiny_dataset() {
  UnpairedDataset d;
  std::mt19937_64 rng(61);
  for (int i = 0; i < 3; ++i) {
    Image bright(32, 32);
    bright.pixels = scuf::testing::random_matrix(32 * 32, 3, rng, 0.4, 1.0);
    d.normal.push_back({bright, "a photo of a red circle on a blue background", {}});
    d.low.push_back({degrade(bright, 3.0, 0.02, i), "a photo of a green square on a grey background", {}});
  }
  return d;
}

TrainerConfig tiny_config() {
  TrainerConfig c;
  c.crop_size = 32;
  c.learning_rate = 1e-3;
  c.discriminator_learning_rate = 2e-4;
  c.pretrain_steps = 3;
  c.iterations = 3;
  c.checkpoint_every = 2;
  return c;
}

}  // namespace

TEST_CASE("derived seeds are stable and stream-specific") {
  CHECK(derive_seed(7, "data") == derive_seed(7, "data"));
  CHECK(derive_seed(7, "data") != derive_seed(7, "pretrain"));
  CHECK(derive_seed(7, "data") != derive_seed(8, "data"));
}

TEST_CASE("conditioning follows the cycle and identity schedule") {
  const UnpairedDataset data = tiny_dataset();
  const TrainerConfig cfg = tiny_config();
  Backbone b(cfg.backbone());
  Trainer t(b, data, cfg);
  t.step();
  const std::vector<std::tuple<std::string, Direction, std::string>> expected{
      {"cycle_low.stage1", Direction::lighten, "I_l:reverse"},
      {"cycle_low.stage2", Direction::darken, "I_l:direct"},
      {"cycle_low.caption", Direction::lighten, "caption:I_l"},
      {"cycle_normal.stage1", Direction::darken, "I_n:reverse"},
      {"cycle_normal.stage2", Direction::lighten, "I_n:direct"},
      {"cycle_normal.caption", Direction::darken, "caption:I_n"},
      {"identity_low", Direction::darken, "I_l:direct"},
      {"identity_normal", Direction::lighten, "I_n:direct"},
  };
  const auto& log = t.last_conditioning();
  REQUIRE(log.size() == expected.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(log[i].pass == std::get<0>(expected[i]));
    CHECK(log[i].direction == std::get<1>(expected[i]));
    CHECK(log[i].prompt_tag == std::get<2>(expected[i]));
  }
  // Every stage-1 translation of a real input is driven by that input's reverse map.
  for (const auto& r : log)
    if (r.pass.ends_with("stage1")) CHECK(r.prompt_tag.ends_with(":reverse"));
}

TEST_CASE("step report is consistent and clipped") {
  const UnpairedDataset data = tiny_dataset();
  const TrainerConfig cfg = tiny_config();
  Backbone b(cfg.backbone());
  Trainer t(b, data, cfg);
  std::vector<Matrix> base_before;
  for (Parameter* p : b.group("base")) base_before.push_back(p->value);
  std::vector<Matrix> dis_before;
  for (Parameter* p : b.discriminator_parameters()) dis_before.push_back(p->value);

  for (int i = 0; i < 3; ++i) {
    const LossReport r = t.step();
    CHECK(r.total == doctest::Approx(full_objective(r, cfg.weights())).epsilon(1e-12));
    CHECK(std::abs(r.identity - (r.identity_image + r.identity_caption + r.identity_reflectance)) <= 1e-12);
    CHECK(std::abs(r.gan_generator - (r.gan_generator_lighten + r.gan_generator_darken)) <= 1e-12);
    CHECK(r.grad_norm <= cfg.grad_clip_max_norm + 1e-9);
    for (Real v : {r.cycle, r.caption, r.reflectance, r.identity, r.gan_generator, r.gan_discriminator}) CHECK(v >= 0.0);
  }
  CHECK(t.iteration() == 3);
  const auto base = b.group("base");
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i]->value == base_before[i]);
  bool dis_moved = false;
  const auto dis = b.discriminator_parameters();
  for (std::size_t i = 0; i < dis.size(); ++i) dis_moved |= dis[i]->value != dis_before[i];
  CHECK(dis_moved);
  for (Parameter* p : dis) CHECK(p->trainable);
}

TEST_CASE("consistency switches zero their terms") {
  const UnpairedDataset data = tiny_dataset();
  TrainerConfig cfg = tiny_config();
  cfg.caption_consistency = false;
  cfg.reflectance_consistency = false;
  Backbone b(cfg.backbone());
  Trainer t(b, data, cfg);
  const LossReport r = t.step();
  CHECK(r.caption == 0.0);
  CHECK(r.reflectance == 0.0);
  CHECK(r.identity_caption == 0.0);
  CHECK(r.identity_reflectance == 0.0);
  for (const auto& rec : t.last_conditioning()) CHECK(rec.prompt_tag.find("caption") == std::string::npos);
}

TEST_CASE("steps are deterministic") {
  const UnpairedDataset data = tiny_dataset();
  const TrainerConfig cfg = tiny_config();
  Backbone a(cfg.backbone()), b(cfg.backbone());
  Trainer ta(a, data, cfg), tb(b, data, cfg);
  for (int i = 0; i < 2; ++i) CHECK(ta.step().csv_row(i) == tb.step().csv_row(i));
  CHECK(fingerprint(a.all_parameters()) == fingerprint(b.all_parameters()));
}

TEST_CASE("non-finite weights raise a numeric error") {
  const UnpairedDataset data = tiny_dataset();
  const TrainerConfig cfg = tiny_config();
  Backbone b(cfg.backbone());
  Trainer t(b, data, cfg);
  b.group("lora")[1]->value(0, 0) = std::nan("");
  CHECK_THROWS_AS(t.step(), NumericError);
}

TEST_CASE("bad inputs are rejected") {
  const TrainerConfig cfg = tiny_config();
  Backbone b(cfg.backbone());
  UnpairedDataset empty;
  CHECK_THROWS_AS(Trainer(b, empty, cfg), DataError);
  const UnpairedDataset data = tiny_dataset();
  Trainer t(b, data, cfg);
  TrainingPair p;
  p.low = Image::constant(16, 16, 0.1);
  p.normal = Image::constant(32, 32, 0.8);
  p.caption_low = p.caption_normal = "a photo";
  CHECK_THROWS_AS(t.step(p), ShapeError);
}

TEST_CASE("full run writes its artifacts") {
  const auto dir = temp_dir("trainer_run");
  const UnpairedDataset data = tiny_dataset();
  const TrainerConfig cfg = tiny_config();
  long calls = 0;
  const TrainResult r = train(cfg, data, dir, nullptr, [&](long, const LossReport&) { ++calls; });
  CHECK(calls == 3);
  CHECK(r.trace.size() == 3);
  CHECK(r.pretrain_losses.size() == 3);
  CHECK(std::filesystem::exists(dir / "checkpoints" / "step_000002" / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "final" / "lora.bin"));
  CHECK(TrainerConfig::load(dir / "config.cfg").hash() == cfg.hash());

  std::ifstream csv(r.trace_path);
  std::string header;
  std::getline(csv, header);
  CHECK(header == LossReport::csv_header());
  int rows = 0;
  for (std::string line; std::getline(csv, line); ++rows) CHECK(line == r.trace[rows].csv_row(rows));
  CHECK(rows == 3);

  std::ifstream mf(dir / "run_manifest.json");
  const auto j = nlohmann::json::parse(mf);
  CHECK(j["outcome"] == "completed");
  CHECK(j["config_hash"] == cfg.hash());
  CHECK(j["seed"] == 7);

  // Reloading the final checkpoint reproduces the trained weights.
  TrainerConfig stored;
  auto reloaded = open_checkpoint(r.final_checkpoint, &stored);
  CHECK(stored.hash() == cfg.hash());

  const auto dir2 = temp_dir("trainer_run_repeat");
  const TrainResult again = train(cfg, data, dir2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.trace[i].csv_row(long(i)) == r.trace[i].csv_row(long(i)));
  CHECK(fingerprint(reloaded->all_parameters()) == [&] {
    auto b = open_checkpoint(again.final_checkpoint);
    return fingerprint(b->all_parameters());
  }());
}

TEST_CASE("mismatched backbone is a config error") {
  const auto dir = temp_dir("trainer_mismatch");
  TrainerConfig cfg = tiny_config();
  TrainerConfig other = cfg;
  other.lora_rank = 2;
  Backbone b(other.backbone());
  CHECK_THROWS_AS(train(cfg, tiny_dataset(), dir, &b), ConfigError);
}
