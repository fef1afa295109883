#pragma once

// Tape-based reverse-mode automatic differentiation over dense matrices.
//
// Rows are batch items, columns are features. A Tape records every operation
// applied to its Vars; Tape::backward walks the record in reverse and
// accumulates gradients into the Parameters that were read through
// Tape::param.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gadc::nn {

using Matrix = Eigen::MatrixXd;

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

/// A named trainable tensor that outlives any single tape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  /// Differentiable input whose gradient is readable after backward().
  Var input(Matrix value) { return push(std::move(value), true, {}); }

  /// Reads a parameter; backward() adds into `p.grad`.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(p.value, true, {});
    nodes_[v.id()].param = &p;
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Records a result node. `backprop` receives the tape and the result id and
  /// must push the result's gradient into its operands via accumulate().
  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, std::size_t)> backprop) {
    nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, std::move(backprop), nullptr});
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  template <class Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void backward(Var loss) {
    if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.value()));
    const std::size_t root = loss.id();
    nodes_[root].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backprop) n.backprop(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backprop;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

inline bool any_grad(std::initializer_list<Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [](const Var& v) { return v.tape().needs_grad(v.id()); });
}

/// Elementwise unary op given value f(x) and derivative df(x, y).
template <class F, class DF>
Var unary(Var x, F f, DF df) {
  Tape& t = x.tape();
  Matrix y = x.value().unaryExpr(f);
  const std::size_t xi = x.id();
  return t.push(std::move(y), any_grad({x}), [xi, df](Tape& tp, std::size_t self) {
    const Matrix& xv = tp.value(xi);
    const Matrix& yv = tp.value(self);
    Matrix d = xv.binaryExpr(yv, df);
    tp.accumulate_expr(xi, tp.grad(self).cwiseProduct(d));
  });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Tape& t = a.tape();
  const std::size_t ai = a.id(), bi = b.id();
  return t.push(a.value() * b.value(), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ai)) tp.accumulate_expr(ai, g * tp.value(bi).transpose());
    if (tp.needs_grad(bi)) tp.accumulate_expr(bi, tp.value(ai).transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(a.value() + b.value(), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    tp.accumulate(ai, tp.grad(self));
    tp.accumulate(bi, tp.grad(self));
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(a.value() - b.value(), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    tp.accumulate(ai, tp.grad(self));
    tp.accumulate_expr(bi, -tp.grad(self));
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(a.value().cwiseProduct(b.value()), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ai)) tp.accumulate_expr(ai, g.cwiseProduct(tp.value(bi)));
    if (tp.needs_grad(bi)) tp.accumulate_expr(bi, g.cwiseProduct(tp.value(ai)));
  });
}

/// Elementwise quotient.
inline Var div(Var a, Var b) {
  detail::require_same_shape(a, b, "div");
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().push(a.value().cwiseQuotient(b.value()), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ai)) tp.accumulate_expr(ai, g.cwiseQuotient(tp.value(bi)));
    if (tp.needs_grad(bi)) tp.accumulate_expr(bi, -g.cwiseProduct(tp.value(self)).cwiseQuotient(tp.value(bi)));
  });
}

/// x + row, with `row` (1 x C) broadcast over the rows of x.
inline Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw std::invalid_argument("add_row: shape mismatch " + shape_str(x.value()) + " + " + shape_str(row.value()));
  }
  const std::size_t xi = x.id(), ri = row.id();
  Matrix y = x.value().rowwise() + row.value().row(0);
  return x.tape().push(std::move(y), detail::any_grad({x, row}), [xi, ri](Tape& tp, std::size_t self) {
    tp.accumulate(xi, tp.grad(self));
    if (tp.needs_grad(ri)) tp.accumulate_expr(ri, tp.grad(self).colwise().sum());
  });
}

inline Var scale(Var x, double s) {
  const std::size_t xi = x.id();
  return x.tape().push(x.value() * s, detail::any_grad({x}), [xi, s](Tape& tp, std::size_t self) {
    tp.accumulate_expr(xi, tp.grad(self) * s);
  });
}

inline Var add_scalar(Var x, double s) {
  const std::size_t xi = x.id();
  return x.tape().push(x.value().array() + s, detail::any_grad({x}), [xi](Tape& tp, std::size_t self) {
    tp.accumulate(xi, tp.grad(self));
  });
}

inline Var relu(Var x) {
  return detail::unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Var tanh(Var x) {
  return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(Var x) {
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Elementwise clamp to [lo, hi]; the gradient is zero where the clamp binds.
inline Var clip(Var x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip: lo > hi");
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

/// Elementwise minimum. Ties route the gradient to `a`.
inline Var minimum(Var a, Var b) {
  detail::require_same_shape(a, b, "minimum");
  const std::size_t ai = a.id(), bi = b.id();
  Matrix y = a.value().cwiseMin(b.value());
  return a.tape().push(std::move(y), detail::any_grad({a, b}), [ai, bi](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& av = tp.value(ai);
    const Matrix& bv = tp.value(bi);
    Matrix mask = (av.array() <= bv.array()).cast<double>().matrix();
    if (tp.needs_grad(ai)) tp.accumulate_expr(ai, g.cwiseProduct(mask));
    if (tp.needs_grad(bi)) tp.accumulate_expr(bi, g.cwiseProduct((1.0 - mask.array()).matrix()));
  });
}

/// Row-wise softmax.
inline Var softmax(Var x) {
  Matrix y = x.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  const std::size_t xi = x.id();
  return x.tape().push(std::move(y), detail::any_grad({x}), [xi](Tape& tp, std::size_t self) {
    const Matrix& yv = tp.value(self);
    const Matrix& g = tp.grad(self);
    Eigen::VectorXd dots = g.cwiseProduct(yv).rowwise().sum();
    Matrix dx = yv.cwiseProduct(g.colwise() - dots);
    tp.accumulate(xi, dx);
  });
}

/// Horizontal concatenation of equal-height blocks.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index c = 0;
  bool ng = false;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
    ng = ng || p.tape().needs_grad(p.id());
  }
  return parts.front().tape().push(std::move(y), ng, [ids, widths](Tape& tp, std::size_t self) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.needs_grad(ids[k])) tp.accumulate_expr(ids[k], tp.grad(self).middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

inline Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw std::invalid_argument("slice_cols: out of range");
  const std::size_t xi = x.id();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape().push(x.value().middleCols(start, count), detail::any_grad({x}),
                       [xi, start, count, rows, cols](Tape& tp, std::size_t self) {
                         Matrix g = Matrix::Zero(rows, cols);
                         g.middleCols(start, count) = tp.grad(self);
                         tp.accumulate(xi, g);
                       });
}

/// Picks column `index[r]` from each row r, giving a column vector.
inline Var gather_cols(Var x, std::vector<int> index) {
  if (static_cast<Eigen::Index>(index.size()) != x.rows()) throw std::invalid_argument("gather_cols: index size mismatch");
  Matrix y(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    if (c < 0 || c >= x.cols()) throw std::invalid_argument("gather_cols: column out of range");
    y(r, 0) = x.value()(r, c);
  }
  const std::size_t xi = x.id();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape().push(std::move(y), detail::any_grad({x}), [xi, index = std::move(index), rows, cols](Tape& tp, std::size_t self) {
    Matrix g = Matrix::Zero(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) g(r, index[static_cast<std::size_t>(r)]) = tp.grad(self)(r, 0);
    tp.accumulate(xi, g);
  });
}

inline Var sum(Var x) {
  const std::size_t xi = x.id();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return x.tape().push(std::move(y), detail::any_grad({x}), [xi, rows, cols](Tape& tp, std::size_t self) {
    tp.accumulate(xi, Matrix::Constant(rows, cols, tp.grad(self)(0, 0)));
  });
}

inline Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

/// Mean squared error between equal-shaped prediction and target.
inline Var mse(Var prediction, Var target) {
  Var d = sub(prediction, target);
  return mean(mul(d, d));
}

}  // namespace gadc::nn
