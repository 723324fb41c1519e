#include "evgraph/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evgraph {

std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << "[" << rows << "x" << cols << "]";
  return os.str();
}

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix values, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  if (requires_grad) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on && (node_->grad.rows() != rows() || node_->grad.cols() != cols())) {
    node_->grad = Matrix::Zero(rows(), cols());
  }
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero(rows(), cols());
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() needs a 1x1 tensor, got " + shape());
  return node_->value(0, 0);
}

Tensor Tensor::clone() const { return Tensor(node_->value, node_->requires_grad); }

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::emit(Matrix value, std::initializer_list<Tensor> inputs,
                  const std::function<Backward(const Tensor&)>& make_backward) {
  return emit(std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()), make_backward);
}

Tensor Tape::emit(Matrix value, std::span<const Tensor> inputs,
                  const std::function<Backward(const Tensor&)>& make_backward) {
  bool needs = false;
  if (recording_) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  Tensor out(std::move(value), needs);
  if (needs) entries_.push_back({out, make_backward(out)});
  return out;
}

void Tape::backward(const Tensor& scalar) {
  if (scalar.rows() != 1 || scalar.cols() != 1) {
    throw ShapeError("backward() needs a scalar (1x1) tensor, got " + scalar.shape());
  }
  if (!scalar.requires_grad()) return;
  for (auto& e : entries_) e.output.zero_grad();
  Tensor seed = scalar;
  seed.grad()(0, 0) += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------
// helpers

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

void require_non_empty(const char* op, const Tensor& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ShapeError(std::string(op) + ": empty input " + a.shape());
}

// Accumulates into t.grad only when t participates in differentiation.
template <typename Expr>
void accumulate(Tensor t, const Expr& g) {
  if (t.requires_grad()) t.grad() += g;
}

}  // namespace

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + a.shape() + " * " + b.shape());
  }
  Matrix v = a.value() * b.value();
  return tape.emit(std::move(v), {a, b}, [a, b](const Tensor& out) -> Tape::Backward {
    return [a, b, out]() {
      const Matrix& g = out.grad();
      if (a.requires_grad()) Tensor(a).grad().noalias() += g * b.value().transpose();
      if (b.requires_grad()) Tensor(b).grad().noalias() += a.value().transpose() * g;
    };
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Matrix v = a.value().transpose();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() { accumulate(a, out.grad().transpose()); };
  });
}

Tensor gram(Tape& tape, const Tensor& x) {
  const Index n = x.rows();
  const Matrix& xv = x.value();
  Matrix v(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double d = xv.row(i).dot(xv.row(j));
      v(i, j) = d;
      v(j, i) = d;
    }
  }
  return tape.emit(std::move(v), {x}, [x](const Tensor& out) -> Tape::Backward {
    return [x, out]() {
      if (!x.requires_grad()) return;
      const Matrix& g = out.grad();
      Matrix sym = g + g.transpose();
      Tensor(x).grad().noalias() += sym * x.value();
    };
  });
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Matrix v = a.value() + b.value();
  return tape.emit(std::move(v), {a, b}, [a, b](const Tensor& out) -> Tape::Backward {
    return [a, b, out]() {
      accumulate(a, out.grad());
      accumulate(b, out.grad());
    };
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Matrix v = a.value() - b.value();
  return tape.emit(std::move(v), {a, b}, [a, b](const Tensor& out) -> Tape::Backward {
    return [a, b, out]() {
      accumulate(a, out.grad());
      accumulate(b, -out.grad());
    };
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return tape.emit(std::move(v), {a, b}, [a, b](const Tensor& out) -> Tape::Backward {
    return [a, b, out]() {
      accumulate(a, out.grad().cwiseProduct(b.value()));
      accumulate(b, out.grad().cwiseProduct(a.value()));
    };
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Matrix v = a.value() * factor;
  return tape.emit(std::move(v), {a}, [a, factor](const Tensor& out) -> Tape::Backward {
    return [a, out, factor]() { accumulate(a, out.grad() * factor); };
  });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double offset) {
  Matrix v = a.value().array() + offset;
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() { accumulate(a, out.grad()); };
  });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() {
      // subgradient at exactly 0 is 0
      accumulate(a, (a.value().array() > 0.0).select(out.grad().array(), 0.0).matrix());
    };
  });
}

Tensor exp(Tape& tape, const Tensor& a) {
  Matrix v = a.value().array().exp();
  if (!v.allFinite()) throw DomainError("exp: result overflows for input " + a.shape());
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() { accumulate(a, out.grad().cwiseProduct(out.value())); };
  });
}

Tensor log(Tape& tape, const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive input");
  Matrix v = a.value().array().log();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() { accumulate(a, out.grad().cwiseQuotient(a.value())); };
  });
}

Tensor sqrt(Tape& tape, const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("sqrt: non-positive input");
  Matrix v = a.value().array().sqrt();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() { accumulate(a, (0.5 * out.grad().array() / out.value().array()).matrix()); };
  });
}

Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lo > hi");
  Matrix v = a.value().cwiseMax(lo).cwiseMin(hi);
  return tape.emit(std::move(v), {a}, [a, lo, hi](const Tensor& out) -> Tape::Backward {
    return [a, out, lo, hi]() {
      const auto x = a.value().array();
      accumulate(a, ((x >= lo) && (x <= hi)).select(out.grad().array(), 0.0).matrix());
    };
  });
}

// ---------------------------------------------------------------------------
// broadcasting

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: expected [1x" + std::to_string(x.cols()) + "] row, got " + row.shape());
  }
  Matrix v = x.value().rowwise() + row.value().row(0);
  return tape.emit(std::move(v), {x, row}, [x, row](const Tensor& out) -> Tape::Backward {
    return [x, row, out]() {
      accumulate(x, out.grad());
      accumulate(row, out.grad().colwise().sum());
    };
  });
}

Tensor div_rows(Tape& tape, const Tensor& x, const Tensor& d) {
  if (d.cols() != 1 || d.rows() != x.rows()) {
    throw ShapeError("div_rows: divisor " + d.shape() + " does not match " + x.shape());
  }
  if ((d.value().array() == 0.0).any()) throw DomainError("div_rows: zero divisor");
  Matrix v = x.value().array().colwise() / d.value().col(0).array();
  return tape.emit(std::move(v), {x, d}, [x, d](const Tensor& out) -> Tape::Backward {
    return [x, d, out]() {
      const auto inv = d.value().col(0).array().inverse();
      accumulate(x, (out.grad().array().colwise() * inv).matrix());
      if (d.requires_grad()) {
        // d/dd_i (x_ij / d_i) = -out_ij / d_i
        Matrix gd = -(out.grad().cwiseProduct(out.value()).rowwise().sum().array() * inv).matrix();
        Tensor(d).grad() += gd;
      }
    };
  });
}

Tensor scale_rows_cols(Tape& tape, const Tensor& w, const Tensor& s) {
  if (w.rows() != w.cols()) throw ShapeError("scale_rows_cols: square matrix required, got " + w.shape());
  if (s.cols() != 1 || s.rows() != w.rows()) {
    throw ShapeError("scale_rows_cols: scale " + s.shape() + " does not match " + w.shape());
  }
  const auto sv = s.value().col(0);
  Matrix v = sv.asDiagonal() * w.value() * sv.asDiagonal();
  return tape.emit(std::move(v), {w, s}, [w, s](const Tensor& out) -> Tape::Backward {
    return [w, s, out]() {
      const auto sv = s.value().col(0);
      const Matrix& g = out.grad();
      accumulate(w, sv.asDiagonal() * g * sv.asDiagonal());
      if (s.requires_grad()) {
        // out_ij = s_i w_ij s_j
        Matrix gw = g.cwiseProduct(w.value());
        Matrix gs = gw * sv + gw.transpose() * sv;
        Tensor(s).grad() += gs;
      }
    };
  });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(Tape& tape, const Tensor& a) {
  require_non_empty("sum_all", a);
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() {
      if (a.requires_grad()) Tensor(a).grad().array() += out.grad()(0, 0);
    };
  });
}

Tensor row_sum(Tape& tape, const Tensor& a) {
  require_non_empty("row_sum", a);
  Matrix v = a.value().rowwise().sum();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() {
      if (a.requires_grad()) Tensor(a).grad().colwise() += out.grad().col(0);
    };
  });
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  require_non_empty("mean_rows", a);
  const double inv = 1.0 / static_cast<double>(a.cols());
  Matrix v = a.value().rowwise().sum() * inv;
  return tape.emit(std::move(v), {a}, [a, inv](const Tensor& out) -> Tape::Backward {
    return [a, out, inv]() {
      if (a.requires_grad()) Tensor(a).grad().colwise() += out.grad().col(0) * inv;
    };
  });
}

Tensor row_l2_norm(Tape& tape, const Tensor& a) {
  require_non_empty("row_l2_norm", a);
  const Eigen::ArrayXd norms = a.value().rowwise().norm().array();
  Matrix v = norms.max(kRowNormEpsilon).matrix();
  return tape.emit(std::move(v), {a}, [a](const Tensor& out) -> Tape::Backward {
    return [a, out]() {
      if (!a.requires_grad()) return;
      // floored rows are constant
      const Eigen::ArrayXd live = (a.value().rowwise().norm().array() > kRowNormEpsilon).cast<double>();
      const Eigen::ArrayXd coef = live * out.grad().col(0).array() / out.value().col(0).array();
      Tensor(a).grad() += (a.value().array().colwise() * coef).matrix();
    };
  });
}

// ---------------------------------------------------------------------------

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const Index n = parts.front().rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw ShapeError("concat_cols: row-count mismatch " + parts.front().shape() + " vs " + p.shape());
    }
    total += p.cols();
  }
  Matrix v(n, total);
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return tape.emit(std::move(v), parts, [inputs](const Tensor& out) -> Tape::Backward {
    return [inputs, out]() {
      Index off = 0;
      for (const auto& p : inputs) {
        accumulate(p, out.grad().middleCols(off, p.cols()));
        off += p.cols();
      }
    };
  });
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  require_non_empty("softmax_rows", x);
  Matrix v = x.value();
  for (Index i = 0; i < v.rows(); ++i) {
    auto r = v.row(i);
    r.array() -= r.maxCoeff();
    r = r.array().exp().matrix();
    r /= r.sum();
  }
  return tape.emit(std::move(v), {x}, [x](const Tensor& out) -> Tape::Backward {
    return [x, out]() {
      if (!x.requires_grad()) return;
      const Matrix& p = out.value();
      const Matrix& g = out.grad();
      // dx = p * (g - <g, p>)
      Eigen::VectorXd dots = g.cwiseProduct(p).rowwise().sum();
      Tensor(x).grad() += (p.array() * (g.colwise() - dots).array()).matrix();
    };
  });
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, RngStream& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("dropout: rate must lie in [0,1]");
  if (rate == 0.0) return x;
  const double keep_scale = rate < 1.0 ? 1.0 / (1.0 - rate) : 0.0;
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(tape, x, Tensor::constant(std::move(mask)));
}

}  // namespace evgraph
