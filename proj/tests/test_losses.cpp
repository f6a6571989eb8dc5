#include "scuf/losses.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace scuf;
using scuf::testing::gradient_check;
using scuf::testing::random_matrix;

namespace {

Real brute_l1(const Matrix& a, const Matrix& b) {
  Real s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / a.size();
}

Real brute_mse(const Matrix& a, const Matrix& b) {
  Real s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  return s / a.size();
}

Real brute_caption(const Matrix& a, const Matrix& b) {
  Real s = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Real dot = 0, na = 0, nb = 0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) dot += a(r, c) * b(r, c), na += a(r, c) * a(r, c), nb += b(r, c) * b(r, c);
    s += (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
  }
  return 1.0 - s / a.rows();
}

Real value(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).item();
}

}  // namespace

TEST_CASE("cycle loss") {
  std::mt19937_64 rng(31);
  const Matrix a = random_matrix(16, 3, rng, 0, 1), b = random_matrix(16, 3, rng, 0, 1), c = random_matrix(16, 3, rng, 0, 1);
  auto L = [](const Matrix& x, const Matrix& y) {
    return value([&](Tape& t) { return cycle_loss(t.constant(x), t.constant(y)); });
  };
  CHECK(L(a, a) == 0.0);
  CHECK(L(Matrix::Constant(16, 3, 0.6), Matrix::Constant(16, 3, 0.5)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(L(a, b) - brute_l1(a, b)) <= 1e-7);
  CHECK(L(a, b) == L(b, a));
  CHECK(L(a, c) <= L(a, b) + L(b, c) + 1e-15);
  Tape tape;
  CHECK_THROWS_AS(cycle_loss(tape.constant(a), tape.constant(Matrix::Zero(16, 2))), ShapeError);
}

TEST_CASE("caption consistency loss") {
  std::mt19937_64 rng(32);
  const Matrix a = random_matrix(6, 5, rng), b = random_matrix(6, 5, rng);
  auto L = [](const Matrix& x, const Matrix& y) {
    return value([&](Tape& t) { return caption_consistency_loss(t.constant(x), t.constant(y)); });
  };
  CHECK(L(a, a) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(L(a, -a) == doctest::Approx(2.0).epsilon(1e-12));
  Matrix x = Matrix::Zero(2, 2), y = Matrix::Zero(2, 2);
  x << 1, 0, 0, 3;
  y << 0, 2, -1, 0;
  CHECK(L(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(L(Matrix::Zero(6, 5), a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(L(a, b) - brute_caption(a, b)) <= 1e-7);

  // Scale invariance per token vector.
  const Matrix alpha = random_matrix(6, 1, rng, 0.1, 5), beta = random_matrix(6, 1, rng, 0.1, 5);
  const Matrix sa = a.array().colwise() * alpha.col(0).array();
  const Matrix sb = b.array().colwise() * beta.col(0).array();
  CHECK(std::abs(L(sa, sb) - L(a, b)) <= 1e-12);
  Tape tape;
  CHECK_THROWS_AS(caption_consistency_loss(tape.constant(a), tape.constant(Matrix::Zero(5, 5))), ShapeError);
}

TEST_CASE("reflectance consistency loss") {
  std::mt19937_64 rng(33);
  const Matrix a = random_matrix(16, 3, rng, 0, 1), b = random_matrix(16, 3, rng, 0, 1), c = random_matrix(16, 3, rng, 0, 1);
  auto L = [](const Matrix& x, const Matrix& y, const Matrix& z) {
    return value([&](Tape& t) { return reflectance_consistency_loss(t.constant(x), t.constant(y), t.constant(z)); });
  };
  CHECK(L(a, a, a) == 0.0);
  const Matrix off = (a.array() + 0.1).matrix();
  CHECK(L(off, off, a) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(L(a, b, c) - (brute_mse(a, b) + brute_l1(b, c))) <= 1e-7);
  Tape tape;
  CHECK_THROWS_AS(reflectance_consistency_loss(tape.constant(a), tape.constant(b), tape.constant(Matrix::Zero(4, 3))),
                  ShapeError);
}

TEST_CASE("identity loss sums its parts") {
  Tape tape;
  auto s = [&](Real v) { return tape.constant(Matrix::Constant(1, 1, v)); };
  CHECK(identity_loss(s(0), s(0), s(0)).item() == 0.0);
  CHECK(identity_loss(s(0.1), s(0.2), s(0.3)).item() == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("least-squares GAN losses") {
  std::mt19937_64 rng(34);
  Tape tape;
  CHECK(gan_generator_loss(tape.constant(Matrix::Ones(4, 1))).item() == 0.0);
  CHECK(gan_discriminator_loss(tape.constant(Matrix::Zero(4, 1)), tape.constant(Matrix::Ones(4, 1))).item() == 0.0);
  const Matrix fake = random_matrix(16, 1, rng, -2, 2), real = random_matrix(16, 1, rng, -2, 2);
  const GanLosses g = gan_losses(tape.constant(fake), tape.constant(real));
  const Real gen = (fake.array() - 1).square().mean();
  const Real dis = 0.5 * (real.array() - 1).square().mean() + 0.5 * fake.array().square().mean();
  CHECK(std::abs(g.generator.item() - gen) <= 1e-7);
  CHECK(std::abs(g.discriminator.item() - dis) <= 1e-7);
  CHECK(g.generator.item() >= 0.0);
  CHECK(g.discriminator.item() >= 0.0);
}

TEST_CASE("full objective weights") {
  const ObjectiveWeights w;
  CHECK(w.lambda_idt == 0.5);
  CHECK(w.lambda_gan == 1.0);
  Tape tape;
  auto s = [&](Real v) { return tape.constant(Matrix::Constant(1, 1, v)); };
  CHECK(full_objective(ObjectiveTerms{s(1), s(1), s(1), s(1), s(1)}, w).item() == 4.5);
  CHECK(full_objective(ObjectiveTerms{s(0), s(0), s(0), s(0), s(0)}, w).item() == 0.0);

  LossReport r;
  r.cycle = 0.3, r.caption = 0.2, r.reflectance = 0.1, r.identity = 0.8, r.gan_generator = 1.5;
  CHECK(full_objective(r, w) == doctest::Approx(0.3 + 0.2 + 0.1 + 0.4 + 1.5).epsilon(1e-15));
  CHECK(full_objective(r, {0.0, 0.0}) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("loss report CSV and finiteness") {
  LossReport r;
  r.cycle = 0.125;
  r.total = 1.0 / 3.0;
  const std::string row = r.csv_row(4);
  CHECK(row.rfind("4,0.125,", 0) == 0);
  const std::string header = LossReport::csv_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
  CHECK(std::stod(row.substr(row.find(",0.33") + 1)) == r.total);
  CHECK_NOTHROW(r.check_finite(4));
  r.reflectance = std::nan("");
  try {
    r.check_finite(9);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.step() == 9);
    CHECK(e.term() == "reflectance");
  }
}

TEST_CASE("loss gradients on 4x4 micro tensors") {
  std::mt19937_64 rng(35);
  auto m = [&] { return random_matrix(4, 4, rng, -1, 1); };
  CHECK(gradient_check({m(), m()}, [](Tape&, auto& v) { return cycle_loss(v[0], v[1]); }) < 1e-3);
  CHECK(gradient_check({m(), m()}, [](Tape&, auto& v) { return caption_consistency_loss(v[0], v[1]); }) < 1e-3);
  CHECK(gradient_check({m(), m(), m()},
                       [](Tape&, auto& v) { return reflectance_consistency_loss(v[0], v[1], v[2]); }) < 1e-3);
  CHECK(gradient_check({m(), m(), m()}, [](Tape&, auto& v) {
          return identity_loss(l1_loss(v[0], v[1]), caption_consistency_loss(v[1], v[2]), mse_loss(v[0], v[2]));
        }) < 1e-3);
  CHECK(gradient_check({m()}, [](Tape&, auto& v) { return gan_generator_loss(v[0]); }) < 1e-3);
  CHECK(gradient_check({m(), m()}, [](Tape&, auto& v) { return gan_discriminator_loss(v[0], v[1]); }) < 1e-3);
  CHECK(gradient_check({m(), m(), m(), m(), m()}, [](Tape&, auto& v) {
          return full_objective(ObjectiveTerms{cycle_loss(v[0], v[1]), caption_consistency_loss(v[1], v[2]),
                                               reflectance_consistency_loss(v[0], v[2], v[3]),
                                               l1_loss(v[3], v[4]), gan_generator_loss(v[4])},
                                ObjectiveWeights{});
        }) < 1e-3);
}
