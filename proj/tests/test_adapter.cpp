#include "scuf/adapter.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace scuf;
using scuf::testing::gradient_check;
using scuf::testing::random_matrix;

namespace {

// Loop-based softmax(q k^T / sqrt(k.cols())) v.
Matrix brute_attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights = nullptr) {
  Matrix w(q.rows(), k.rows());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Real mx = -INFINITY;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      Real dot = 0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      w(i, j) = dot / std::sqrt(static_cast<Real>(k.cols()));
      mx = std::max(mx, w(i, j));
    }
    Real total = 0;
    for (Eigen::Index j = 0; j < k.rows(); ++j) total += (w(i, j) = std::exp(w(i, j) - mx));
    for (Eigen::Index j = 0; j < k.rows(); ++j) w(i, j) /= total;
  }
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < k.rows(); ++j)
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += w(i, j) * v(j, c);
  if (weights) *weights = w;
  return out;
}

Real row_stochastic_error(const Matrix& w) {
  return std::max((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), std::max(0.0, -w.minCoeff()));
}

}  // namespace

TEST_CASE("cycle attention matches a two-stage brute force on 3 tokens, d = 4") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const Matrix z_u = random_matrix(3, 4, rng, -2, 2);
    const Matrix c_i = random_matrix(3, 4, rng, -2, 2);
    const Matrix eye = Matrix::Identity(4, 4);
    Tape tape;
    const CycleAttentionOutput out = cycle_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(eye),
                                                     tape.constant(eye), tape.constant(eye));
    const Matrix z_f = brute_attention(c_i, z_u, z_u);
    const Matrix z_n = brute_attention(z_f, c_i, c_i);
    CHECK((out.z_f.value() - z_f).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((out.z_n.value() - z_n).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(row_stochastic_error(out.stage1_weights.value()) <= 1e-5);
    CHECK(row_stochastic_error(out.stage2_weights.value()) <= 1e-5);
  }
}

TEST_CASE("cycle attention with learned projections") {
  std::mt19937_64 rng(22);
  const Matrix z_u = random_matrix(4, 4, rng), c_i = random_matrix(4, 3, rng);
  const Matrix wq = random_matrix(3, 4, rng), wk = random_matrix(3, 4, rng), wv = random_matrix(3, 6, rng);
  Tape tape;
  const auto out = cycle_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(wq), tape.constant(wk),
                                   tape.constant(wv));
  const Matrix z_f = brute_attention(c_i * wq, z_u, z_u);
  CHECK((out.z_n.value() - brute_attention(z_f, c_i * wk, c_i * wv)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(out.z_n.rows() == z_u.rows());
  CHECK(out.z_n.cols() == 6);
}

TEST_CASE("single-token cycle attention collapses") {
  std::mt19937_64 rng(23);
  const Matrix z_u = random_matrix(1, 4, rng), c_i = random_matrix(1, 4, rng);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng);
  Tape tape;
  const auto out = cycle_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(wq), tape.constant(wk),
                                   tape.constant(wv));
  CHECK((out.z_f.value() - z_u).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((out.z_n.value() - c_i * wv).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cycle attention rejects misaligned prompts") {
  Tape tape;
  const Var eye = tape.constant(Matrix::Identity(4, 4));
  CHECK_THROWS_AS(cycle_attention(tape.constant(Matrix::Ones(3, 4)), tape.constant(Matrix::Ones(2, 4)), eye, eye, eye),
                  ShapeError);
}

TEST_CASE("zero value projection nullspace") {
  std::mt19937_64 rng(24);
  const Matrix z_u = random_matrix(6, 4, rng), c_i = random_matrix(6, 3, rng), c_t = random_matrix(5, 8, rng);
  Tape tape;
  const auto out = cycle_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(random_matrix(3, 4, rng)),
                                   tape.constant(random_matrix(3, 4, rng)), tape.constant(Matrix::Zero(3, 4)));
  CHECK(out.z_n.value().cwiseAbs().maxCoeff() == 0.0);

  SiteWeights w{tape.constant(random_matrix(4, 4, rng)), tape.constant(random_matrix(8, 4, rng)),
                tape.constant(random_matrix(8, 4, rng)), tape.constant(random_matrix(3, 4, rng)),
                tape.constant(random_matrix(3, 4, rng)), tape.constant(Matrix::Zero(3, 4))};
  const Var zu = tape.constant(z_u), ct = tape.constant(c_t), ci = tape.constant(c_i);
  const Matrix text_only = condition_site(zu, ct, std::nullopt, AdapterMode::text_only, w).value();
  for (AdapterMode mode : {AdapterMode::cycle_attention, AdapterMode::ip_adapter, AdapterMode::original}) {
    CHECK(condition_site(zu, ct, ci, mode, w).value() == text_only);
    CHECK(condition_site(zu, ct, std::nullopt, mode, w).value() == text_only);
  }
}

TEST_CASE("text cross attention") {
  std::mt19937_64 rng(25);
  const Matrix z_u = random_matrix(5, 4, rng), c_t = random_matrix(1, 6, rng);
  const Matrix wq = random_matrix(4, 3, rng), wk = random_matrix(6, 3, rng), wv = random_matrix(6, 4, rng);
  Tape tape;
  const auto one = text_cross_attention(tape.constant(z_u), tape.constant(c_t), tape.constant(wq), tape.constant(wk),
                                        tape.constant(wv));
  for (Eigen::Index r = 0; r < 5; ++r) CHECK((one.output.value().row(r) - c_t * wv).cwiseAbs().maxCoeff() <= 1e-12);

  // Two latent tokens, two text tokens, d = 2, identity projections.
  Matrix zq(2, 2), ct(2, 2);
  zq << 1, 0, 0, 2;
  ct << 1, 1, -1, 0.5;
  const Matrix eye = Matrix::Identity(2, 2);
  const auto tiny = text_cross_attention(tape.constant(zq), tape.constant(ct), tape.constant(eye), tape.constant(eye),
                                         tape.constant(eye));
  const Real s = std::sqrt(2.0);
  const Real a0 = std::exp(1 / s), b0 = std::exp(-1 / s);
  const Real a1 = std::exp(2 / s), b1 = std::exp(1 / s);
  Matrix expected(2, 2);
  expected << (a0 * 1 + b0 * -1) / (a0 + b0), (a0 * 1 + b0 * 0.5) / (a0 + b0), (a1 * 1 + b1 * -1) / (a1 + b1),
      (a1 * 1 + b1 * 0.5) / (a1 + b1);
  CHECK((tiny.output.value() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(row_stochastic_error(tiny.weights.value()) <= 1e-5);
}

TEST_CASE("ip adapter attention") {
  std::mt19937_64 rng(26);
  const Matrix z_u = random_matrix(4, 4, rng), c1 = random_matrix(1, 4, rng);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng);
  Tape tape;
  const auto one = ip_adapter_attention(tape.constant(z_u), tape.constant(c1), tape.constant(wq), tape.constant(wk),
                                        tape.constant(wv));
  for (Eigen::Index r = 0; r < 4; ++r) CHECK((one.output.value().row(r) - c1 * wv).cwiseAbs().maxCoeff() <= 1e-12);

  const Matrix c_i = random_matrix(4, 4, rng);
  const auto ip = ip_adapter_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(wq), tape.constant(wk),
                                       tape.constant(wv));
  CHECK(row_stochastic_error(ip.weights.value()) <= 1e-5);
  const auto ca = cycle_attention(tape.constant(z_u), tape.constant(c_i), tape.constant(wq), tape.constant(wk),
                                  tape.constant(wv));
  CHECK((ip.output.value() - ca.z_n.value()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("decoupled combine") {
  std::mt19937_64 rng(27);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  Tape tape;
  const Var va = tape.constant(a), vb = tape.constant(b);
  CHECK(decoupled_combine(va, tape.constant(Matrix::Zero(3, 4))).value() == a);
  CHECK(decoupled_combine(va, vb).value() == decoupled_combine(vb, va).value());
  CHECK((decoupled_combine(va, vb).value() - (a + b)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(decoupled_combine(va, tape.constant(Matrix::Zero(3, 3))), ShapeError);
}

TEST_CASE("every mode keeps the text-branch output shape") {
  std::mt19937_64 rng(28);
  Tape tape;
  SiteWeights w{tape.constant(random_matrix(4, 4, rng)), tape.constant(random_matrix(8, 4, rng)),
                tape.constant(random_matrix(8, 4, rng)), tape.constant(random_matrix(3, 4, rng)),
                tape.constant(random_matrix(3, 4, rng)), tape.constant(random_matrix(3, 4, rng))};
  const Var zu = tape.constant(random_matrix(6, 4, rng)), ct = tape.constant(random_matrix(5, 8, rng));
  const Var ci = tape.constant(random_matrix(6, 3, rng));
  for (AdapterMode mode :
       {AdapterMode::text_only, AdapterMode::original, AdapterMode::ip_adapter, AdapterMode::cycle_attention}) {
    const Var out = condition_site(zu, ct, ci, mode, w);
    CHECK(out.rows() == 6);
    CHECK(out.cols() == 4);
    CHECK(parse_adapter_mode(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_adapter_mode("cross"), ConfigError);
}

TEST_CASE("cycle attention projection gradients") {
  std::mt19937_64 rng(29);
  const Matrix z_u = random_matrix(3, 4, rng), c_i = random_matrix(3, 4, rng), target = random_matrix(3, 4, rng);
  const Real err = gradient_check(
      {random_matrix(4, 4, rng), random_matrix(4, 4, rng), random_matrix(4, 4, rng)},
      [&](Tape& tape, const std::vector<Var>& v) {
        const auto out = cycle_attention(tape.constant(z_u), tape.constant(c_i), v[0], v[1], v[2]);
        return ops::sum(ops::mul(out.z_n, tape.constant(target)));
      });
  CHECK(err < 1e-3);
}

TEST_CASE("image prompt features") {
  const std::vector<ScaleShape> scales{{2, 2}, {4, 4}};
  RowVector l0(3), l1(3);
  l0 << 1, -2, 0.5;
  l1 << 0.25, 1, 3;
  const auto constant = extract_image_prompt_features(Matrix::Constant(8, 8, 0.4), scales, {l0, l1});
  REQUIRE(constant.size() == 2);
  CHECK(constant[0].rows() == 4);
  CHECK(constant[1].rows() == 16);
  for (Eigen::Index r = 0; r < 16; ++r) CHECK((constant[1].row(r) - 0.4 * l1).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker(y, x) = (x + y) % 2;
  const auto pooled = extract_image_prompt_features(checker, {{2, 2}}, {RowVector::Ones(1)});
  CHECK((pooled[0].array() - 0.5).abs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(extract_image_prompt_features(Matrix::Zero(8, 8), {{3, 3}}, {l0}), ShapeError);
  CHECK_THROWS_AS(extract_image_prompt_features(Matrix::Zero(8, 8), scales, {l0}), ShapeError);
}
