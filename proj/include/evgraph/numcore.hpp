#pragma once

// Dense 2-D matrices with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a value matrix and its accumulated gradient.
// Operations take the Tape explicitly; when the tape is recording and any
// operand requires a gradient, the result requires a gradient too and a
// vector-Jacobian closure is appended to the tape. Tape::backward replays the
// closures in exact reverse order.

#include "evgraph/errors.hpp"
#include "evgraph/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace evgraph {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

std::string shape_str(Index rows, Index cols);

class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix values, bool requires_grad = false);

  static Tensor constant(Matrix values) { return Tensor(std::move(values), false); }
  static Tensor parameter(Matrix values) { return Tensor(std::move(values), true); }
  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::string shape() const { return shape_str(rows(), cols()); }

  const Matrix& value() const { return node_->value; }
  Matrix& value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& grad() { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  /// Value of a 1x1 tensor.
  double item() const;

  /// Deep copy with its own storage (gradient reset).
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  using Backward = std::function<void()>;

  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  /// Builds an op result. The result requires a gradient when the tape is
  /// recording and any input does; only then is `backward` stored.
  Tensor emit(Matrix value, std::initializer_list<Tensor> inputs, const std::function<Backward(const Tensor&)>& make_backward);
  Tensor emit(Matrix value, std::span<const Tensor> inputs, const std::function<Backward(const Tensor&)>& make_backward);

  /// Seeds d(scalar)/d(scalar) = 1 and propagates through every recorded op
  /// in reverse. Gradients of intermediate results are reset first so that
  /// only leaf gradients accumulate across repeated calls.
  void backward(const Tensor& scalar);

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    Backward backward;
  };
  bool recording_;
  std::vector<Entry> entries_;
};

// Linear algebra.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
/// x * x^T, each off-diagonal pair evaluated once and mirrored so the result is exactly symmetric.
Tensor gram(Tape& tape, const Tensor& x);

// Elementwise.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double offset);
Tensor relu(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor sqrt(Tape& tape, const Tensor& a);
Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi);

// Broadcasting.
/// x[N x C] + b[1 x C] added to every row.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& row);
/// x[N x C] with row i divided by d[i] (d is N x 1).
Tensor div_rows(Tape& tape, const Tensor& x, const Tensor& d);
/// diag(s) * w * diag(s) for square w and s[N x 1].
Tensor scale_rows_cols(Tape& tape, const Tensor& w, const Tensor& s);

// Reductions.
Tensor sum_all(Tape& tape, const Tensor& a);
/// Per-row sum, N x 1.
Tensor row_sum(Tape& tape, const Tensor& a);
/// Per-row mean, N x 1.
Tensor mean_rows(Tape& tape, const Tensor& a);
/// max(||x_i||, 1e-12), N x 1. The floor only guards zero rows, so
/// normalizing by it is exactly scale invariant elsewhere.
Tensor row_l2_norm(Tape& tape, const Tensor& a);

inline constexpr double kRowNormEpsilon = 1e-12;

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor softmax_rows(Tape& tape, const Tensor& x);

/// Inverted dropout: each entry is zeroed with probability `rate` and
/// survivors are scaled by 1/(1-rate). rate == 0 returns `x` itself.
Tensor dropout(Tape& tape, const Tensor& x, double rate, RngStream& rng);

}  // namespace evgraph
