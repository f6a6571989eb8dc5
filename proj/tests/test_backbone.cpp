#include "scuf/backbone.hpp"
#include "scuf/losses.hpp"
#include "scuf/optim.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace scuf;
using scuf::testing::random_matrix;

namespace {

Image random_image(int h, int w, std::mt19937_64& rng) {
  Image img(h, w);
  img.pixels = random_matrix(static_cast<Eigen::Index>(h) * w, 3, rng, 0, 1);
  return img;
}

ConditionBundle bundle(Backbone& b, const Image& img, Direction d) {
  ConditionBundle c;
  c.text_tokens = b.embed_text(d == Direction::lighten ? "a bright normal light photo" : "a dark low light photo");
  c.image_prompt_tokens = b.image_prompt_tokens(illumination_prompt(img).v_reverse);
  c.direction = d;
  c.prompt_tag = "test";
  return c;
}

}  // namespace

TEST_CASE("LoRA merge") {
  std::mt19937_64 rng(41);
  const Matrix w = random_matrix(3, 5, rng), a = random_matrix(3, 2, rng), b = random_matrix(2, 5, rng);
  const Matrix zero_b = Matrix::Zero(2, 5), wide_b = Matrix::Zero(3, 5);
  const Matrix empty_a = Matrix::Zero(3, 0), empty_b = Matrix::Zero(0, 5);
  CHECK(apply_lora(w, a, zero_b, 4.0) == w);
  CHECK((apply_lora(w, a, b, 4.0) - (w + 2.0 * a * b)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(apply_lora(w, a, wide_b, 4.0), ShapeError);
  CHECK_THROWS_AS(apply_lora(w, empty_a, empty_b, 4.0), ShapeError);
}

TEST_CASE("pipeline shapes") {
  Backbone b(BackboneConfig{});
  std::mt19937_64 rng(42);
  const Image img = random_image(32, 48, rng);
  Tape tape;
  LatentStack stack;
  const FeatureMap out = b.generate(tape, Backbone::image_input(tape, img), bundle(b, img, Direction::lighten),
                                    AdapterMode::cycle_attention, &stack);
  CHECK(out.height == 32);
  CHECK(out.width == 48);
  CHECK(out.channels() == 3);
  CHECK(out.data.value().minCoeff() >= 0.0);
  CHECK(out.data.value().maxCoeff() <= 1.0);
  REQUIRE(stack.scales.size() == 2);
  CHECK(stack.scales[0].height == 2);
  CHECK(stack.scales[1].height == 4);
  CHECK(stack.final.height == 4);
  CHECK(stack.final.width == 6);
  const auto tokens = b.image_prompt_tokens(Matrix::Zero(32, 48));
  CHECK(tokens[0].rows() == stack.scales[0].tokens());
  CHECK(tokens[1].rows() == stack.scales[1].tokens());
  const FeatureMap refl = b.reflectance_decode(tape, stack.final);
  CHECK(refl.height == 32);
  CHECK(refl.width == 48);
  CHECK(b.discriminate(tape, out, Direction::darken).channels() == 1);
  CHECK(b.config().required_divisor() == 16);
  const Encoded enc = b.encode(tape, Backbone::image_input(tape, img), Direction::lighten);
  REQUIRE(enc.skips.size() == 2);
  CHECK(enc.skips[0].height == 16);
  CHECK(enc.skips[0].width == 24);
  CHECK(enc.skips[1].height == 8);
  CHECK(enc.latent.height == 4);
  CHECK_THROWS_AS(b.image_prompt_tokens(Matrix::Zero(24, 24)), ShapeError);
  CHECK_THROWS_AS(b.encode(tape, Backbone::image_input(tape, random_image(20, 20, rng)), Direction::lighten),
                  ShapeError);
}

TEST_CASE("zero LoRA delta leaves the pipeline bitwise unchanged") {
  Backbone b(BackboneConfig{});
  b.configure_finetuning();
  std::mt19937_64 rng(43);
  for (int i = 0; i < 3; ++i) {
    const Image img = random_image(32, 32, rng);
    Tape t1, t2;
    b.set_lora_enabled(true);
    const Matrix with = b.generate(t1, Backbone::image_input(t1, img), bundle(b, img, Direction::lighten),
                                   AdapterMode::cycle_attention)
                            .data.value();
    b.set_lora_enabled(false);
    const Matrix without = b.generate(t2, Backbone::image_input(t2, img), bundle(b, img, Direction::lighten),
                                      AdapterMode::cycle_attention)
                               .data.value();
    CHECK(with == without);
  }
}

TEST_CASE("zero-init value projection makes every adapter mode equal text-only at start") {
  Backbone b(BackboneConfig{});
  std::mt19937_64 rng(44);
  const Image img = random_image(32, 32, rng);
  Tape tape;
  const ConditionBundle c = bundle(b, img, Direction::darken);
  const Matrix ref = b.generate(tape, Backbone::image_input(tape, img), c, AdapterMode::text_only).data.value();
  for (AdapterMode m : {AdapterMode::original, AdapterMode::ip_adapter, AdapterMode::cycle_attention}) {
    CHECK(b.generate(tape, Backbone::image_input(tape, img), c, m).data.value() == ref);
  }
}

TEST_CASE("training configurations freeze the right groups") {
  Backbone b(BackboneConfig{});
  b.configure_finetuning();
  for (Parameter* p : b.group("base")) CHECK_FALSE(p->trainable);
  for (const char* g : {"lora", "adapter", "reflectance_decoder", "discriminators"})
    for (Parameter* p : b.group(g)) CHECK(p->trainable);

  b.configure_pretraining();
  for (const char* g : {"lora", "adapter", "reflectance_decoder", "discriminators"})
    for (Parameter* p : b.group(g)) CHECK_FALSE(p->trainable);
  for (Parameter* p : b.group("base")) CHECK(p->trainable == (p->name != "text.table" && p->name != "prompt.lift"));
  CHECK_THROWS(b.group("nope"));

  // Frozen base receives no gradient during fine-tuning.
  b.configure_finetuning();
  for (Parameter* p : b.all_parameters()) p->zero_grad();
  std::mt19937_64 rng(45);
  const Image img = random_image(32, 32, rng);
  Tape tape;
  const FeatureMap out = b.generate(tape, Backbone::image_input(tape, img), bundle(b, img, Direction::lighten),
                                    AdapterMode::cycle_attention);
  tape.backward(l1_loss(out.data, tape.constant(img.pixels)));
  for (Parameter* p : b.group("base")) CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  Real lora_grad = 0;
  for (Parameter* p : b.group("lora")) lora_grad += p->grad.squaredNorm();
  CHECK(lora_grad > 0.0);
}

TEST_CASE("copying the lighten base into the darken pair") {
  Backbone b(BackboneConfig{});
  std::mt19937_64 rng(46);
  const Image img = random_image(32, 32, rng);
  auto run = [&](Direction d) {
    Tape tape;
    const Encoded e = b.encode(tape, Backbone::image_input(tape, img), d);
    return b.decode(tape, e.latent, e.skips, d).data.value();
  };
  CHECK(run(Direction::lighten) != run(Direction::darken));
  b.copy_lighten_base_to_darken();
  CHECK(run(Direction::lighten) == run(Direction::darken));
}

TEST_CASE("hashed text embedder") {
  Backbone b(BackboneConfig{});
  const Matrix e = b.embed_text("a  dark low   light photo");
  CHECK(e.rows() == 5);
  CHECK(e.cols() == b.config().text_dim);
  CHECK(e == b.embed_text("a dark low light photo"));
  CHECK(e.row(0) == b.embed_text("a bright photo").row(0));
  CHECK(e.row(1) != b.embed_text("a bright photo").row(1));
  std::string longer;
  for (int i = 0; i < 40; ++i) longer += "w" + std::to_string(i) + " ";
  CHECK(b.embed_text(longer).rows() == b.config().max_text_tokens);
  CHECK_THROWS(b.embed_text("   "));

  Backbone same(BackboneConfig{});
  CHECK(same.embed_text("a photo") == b.embed_text("a photo"));
}

TEST_CASE("base autoencoder overfits one image") {
  Backbone b(BackboneConfig{});
  b.configure_pretraining();
  std::mt19937_64 rng(47);
  Image img(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      img.at(y, x, 0) = 0.2 + 0.6 * x / 31.0;
      img.at(y, x, 1) = 0.3 + 0.4 * y / 31.0;
      img.at(y, x, 2) = (x - 16) * (x - 16) + (y - 16) * (y - 16) < 64 ? 0.9 : 0.2;
    }
  std::vector<Parameter*> params;
  for (Parameter* p : b.group("base"))
    if (p->trainable) params.push_back(p);
  AdamW opt(params, {3e-3, 0.9, 0.999, 1e-8, 0.0});
  ConditionBundle c;
  c.text_tokens = b.embed_text("a photo");
  c.direction = Direction::lighten;
  Real loss = 1;
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    Tape tape;
    const FeatureMap out = b.generate(tape, Backbone::image_input(tape, img), c, AdapterMode::text_only);
    const Var l = l1_loss(out.data, tape.constant(img.pixels));
    tape.backward(l);
    clip_grad_norm(params, 10.0);
    opt.step();
    loss = l.item();
  }
  CHECK(loss <= 0.05);
}
