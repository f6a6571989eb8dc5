#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace scuf {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Real = double;
using Matrix = MatrixX<Real>;
using RowVector = RowVectorX<Real>;

// A named weight matrix owned by a network. Gradients accumulate into `grad`
// only while `trainable` is set.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = false)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  // Scalar value of a 1x1 result.
  Real item() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording of a computation over row-major matrices.
class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf bound to a parameter; gradient lands in param.grad when trainable.
  Var param(Parameter& p);
  Var record(Matrix value, bool requires_grad, Backward backward);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs the recorded graph backwards.
  void backward(const Var& loss);

  // Adds `g` into the gradient slot of `v` (no-op when v does not require grad).
  void accumulate(const Var& v, const Matrix& g);
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    if (!v.requires_grad()) return;
    Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// Spatial view of a token matrix: rows are pixels in raster order, columns are channels.
struct FeatureMap {
  Var data;
  int height = 0;
  int width = 0;

  int channels() const { return static_cast<int>(data.cols()); }
  int tokens() const { return height * width; }
};

}  // namespace scuf
