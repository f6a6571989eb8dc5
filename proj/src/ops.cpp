#include "scuf/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scuf::ops {
namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("ops: uninitialised variable");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("ops: operands recorded on different tapes");
  return tape_of(a);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

Matrix scalar(Real v) { return Matrix::Constant(1, 1, v); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value());
    if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  return t.record(a.value() + b.value(), a.requires_grad() || b.requires_grad(), [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  return t.record(a.value() - b.value(), a.requires_grad() || b.requires_grad(), [&t, a, b](const Matrix& g) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [&t, a, b](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, Real s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, a.requires_grad(), [&t, a, s](const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, Real s) {
  Tape& t = tape_of(a);
  return t.record((a.value().array() + s).matrix(), a.requires_grad(),
                  [&t, a](const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), a.requires_grad() || row.requires_grad(), [&t, a, row](const Matrix& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var abs(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(a.value().cwiseAbs(), a.requires_grad(), [&t, a](const Matrix& g) {
    Matrix sign = a.value().unaryExpr([](Real v) { return Real((v > 0) - (v < 0)); });
    t.accumulate(a, g.cwiseProduct(sign));
  });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(a.value().cwiseAbs2(), a.requires_grad(),
                  [&t, a](const Matrix& g) { t.accumulate(a, 2.0 * g.cwiseProduct(a.value())); });
}

Var leaky_relu(const Var& a, Real slope) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([slope](Real v) { return v > 0 ? v : slope * v; });
  return t.record(std::move(out), a.requires_grad(), [&t, a, slope](const Matrix& g) {
    Matrix d = a.value().unaryExpr([slope](Real v) { return v > 0 ? Real(1) : slope; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr([](Real v) { return Real(1) / (Real(1) + std::exp(-v)); });
  const Var self(&t, t.size());
  return t.record(std::move(out), a.requires_grad(), [&t, a, self](const Matrix& g) {
    const Matrix& y = self.value();
    t.accumulate(a, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  const Var self(&t, t.size());
  return t.record(std::move(out), a.requires_grad(), [&t, a, self](const Matrix& g) {
    const Matrix& p = self.value();
    Eigen::VectorXd dots = (g.cwiseProduct(p)).rowwise().sum();
    Matrix ga = p.cwiseProduct((g.colwise() - dots));
    t.accumulate(a, ga);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(), [&t, a, b, ca](const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g.leftCols(ca));
    if (b.requires_grad()) t.accumulate(b, g.rightCols(g.cols() - ca));
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: element count mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return t.record(std::move(out), a.requires_grad(), [&t, a, r0, c0](const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), r0, c0));
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  return t.record(scalar(a.value().sum()), a.requires_grad(), [&t, a](const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  Tape& t = tape_of(a);
  const Real n = static_cast<Real>(a.value().size());
  return t.record(scalar(a.value().sum() / n), a.requires_grad(), [&t, a, n](const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var mean_rows(const Var& a) {
  Tape& t = tape_of(a);
  const Real n = static_cast<Real>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return t.record(std::move(out), a.requires_grad(), [&t, a, n](const Matrix& g) {
    Matrix ga = g.replicate(a.rows(), 1) / n;
    t.accumulate(a, ga);
  });
}

Var mean_row_cosine(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mean_row_cosine");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const Eigen::Index n = x.rows();
  Eigen::VectorXd nx = x.rowwise().norm();
  Eigen::VectorXd ny = y.rowwise().norm();
  Eigen::VectorXd dot = x.cwiseProduct(y).rowwise().sum();
  Real total = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    if (nx(r) > 0 && ny(r) > 0) total += dot(r) / (nx(r) * ny(r));
  }
  return t.record(scalar(total / static_cast<Real>(n)), a.requires_grad() || b.requires_grad(),
                  [&t, a, b, nx, ny, dot, n](const Matrix& g) {
                    const Matrix& x = a.value();
                    const Matrix& y = b.value();
                    Matrix ga = Matrix::Zero(x.rows(), x.cols());
                    Matrix gb = Matrix::Zero(y.rows(), y.cols());
                    const Real s = g(0, 0) / static_cast<Real>(n);
                    for (Eigen::Index r = 0; r < n; ++r) {
                      if (!(nx(r) > 0 && ny(r) > 0)) continue;
                      const Real inv = 1.0 / (nx(r) * ny(r));
                      const Real c = dot(r) * inv;
                      ga.row(r) = s * (y.row(r) * inv - c * x.row(r) / (nx(r) * nx(r)));
                      gb.row(r) = s * (x.row(r) * inv - c * y.row(r) / (ny(r) * ny(r)));
                    }
                    t.accumulate(a, ga);
                    t.accumulate(b, gb);
                  });
}

Var cross_entropy(const Var& logits, int label) {
  Tape& t = tape_of(logits);
  if (logits.rows() != 1 || label < 0 || label >= logits.cols()) {
    throw std::invalid_argument("cross_entropy: expects a 1xK row and a label in [0, K)");
  }
  RowVector z = logits.value().row(0);
  const Real m = z.maxCoeff();
  RowVector e = (z.array() - m).exp().matrix();
  const Real lse = m + std::log(e.sum());
  RowVector p = e / e.sum();
  return t.record(scalar(lse - z(label)), logits.requires_grad(), [&t, logits, p, label](const Matrix& g) {
    Matrix gl = p;
    gl(0, label) -= 1.0;
    t.accumulate(logits, gl * g(0, 0));
  });
}

Im2Col im2col(const FeatureMap& x, int kernel, int stride, int pad) {
  Tape& t = tape_of(x.data);
  const int h = x.height, w = x.width, c = x.channels();
  if (x.data.rows() != static_cast<Eigen::Index>(h) * w) throw std::invalid_argument("im2col: token count mismatch");
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  const Matrix& src = x.data.value();
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(kernel) * kernel * c);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= w) continue;
          cols.block(row, (ky * kernel + kx) * c, 1, c) = src.row(static_cast<Eigen::Index>(iy) * w + ix);
        }
      }
    }
  }
  Var in = x.data;
  Var out = t.record(std::move(cols), in.requires_grad(), [&t, in, h, w, c, ho, wo, kernel, stride, pad](const Matrix& g) {
    Matrix gx = Matrix::Zero(static_cast<Eigen::Index>(h) * w, c);
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= w) continue;
            gx.row(static_cast<Eigen::Index>(iy) * w + ix) += g.block(row, (ky * kernel + kx) * c, 1, c);
          }
        }
      }
    }
    t.accumulate(in, gx);
  });
  return Im2Col{out, ho, wo};
}

FeatureMap upsample2x(const FeatureMap& x) {
  Tape& t = tape_of(x.data);
  const int h = x.height, w = x.width, c = x.channels();
  const Matrix& src = x.data.value();
  Matrix out(static_cast<Eigen::Index>(4) * h * w, c);
  for (int y = 0; y < 2 * h; ++y) {
    for (int xx = 0; xx < 2 * w; ++xx) {
      out.row(static_cast<Eigen::Index>(y) * 2 * w + xx) = src.row(static_cast<Eigen::Index>(y / 2) * w + xx / 2);
    }
  }
  Var in = x.data;
  Var v = t.record(std::move(out), in.requires_grad(), [&t, in, h, w, c](const Matrix& g) {
    Matrix gx = Matrix::Zero(static_cast<Eigen::Index>(h) * w, c);
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) {
        gx.row(static_cast<Eigen::Index>(y / 2) * w + xx / 2) += g.row(static_cast<Eigen::Index>(y) * 2 * w + xx);
      }
    }
    t.accumulate(in, gx);
  });
  return FeatureMap{v, 2 * h, 2 * w};
}

FeatureMap avg_pool2x(const FeatureMap& x) {
  Tape& t = tape_of(x.data);
  const int h = x.height, w = x.width, c = x.channels();
  if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avg_pool2x: odd spatial size");
  const int ho = h / 2, wo = w / 2;
  const Matrix& src = x.data.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(ho) * wo, c);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      out.row(static_cast<Eigen::Index>(y / 2) * wo + xx / 2) += 0.25 * src.row(static_cast<Eigen::Index>(y) * w + xx);
    }
  }
  Var in = x.data;
  Var v = t.record(std::move(out), in.requires_grad(), [&t, in, h, w, c, wo](const Matrix& g) {
    Matrix gx(static_cast<Eigen::Index>(h) * w, c);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        gx.row(static_cast<Eigen::Index>(y) * w + xx) = 0.25 * g.row(static_cast<Eigen::Index>(y / 2) * wo + xx / 2);
      }
    }
    t.accumulate(in, gx);
  });
  return FeatureMap{v, ho, wo};
}

FeatureMap conv2d(const FeatureMap& x, const Var& weight, const Var& bias, int kernel, int stride) {
  if (weight.cols() != static_cast<Eigen::Index>(kernel) * kernel * x.channels()) {
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.cols() / (kernel * kernel)) +
                                " input channels, got " + std::to_string(x.channels()));
  }
  Im2Col c = im2col(x, kernel, stride, kernel / 2);
  Var y = add_row(matmul_nt(c.cols, weight), bias);
  return FeatureMap{y, c.out_height, c.out_width};
}

}  // namespace scuf::ops
