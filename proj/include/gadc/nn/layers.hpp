#pragma once

#include "gadc/nn/autodiff.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gadc::nn {

using ParamList = std::vector<Parameter*>;
using ConstParamList = std::vector<const Parameter*>;

/// Uniform Glorot initialisation.
inline Matrix glorot(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(in, out);
  for (Eigen::Index c = 0; c < out; ++c)
    for (Eigen::Index r = 0; r < in; ++r) m(r, c) = u(rng);
  return m;
}

/// Affine map x W + b.
struct Dense {
  Parameter weight;
  Parameter bias;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, const std::string& name, std::mt19937_64& rng)
      : weight(name + ".w", glorot(in, out, rng)), bias(name + ".b", Matrix::Zero(1, out)) {}

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  Var operator()(Tape& t, Var x) {
    if (x.cols() != in_dim()) {
      throw std::invalid_argument(weight.name + ": expected " + std::to_string(in_dim()) + " input columns, got " +
                                  std::to_string(x.cols()));
    }
    return add_row(matmul(x, t.param(weight)), t.param(bias));
  }

  void collect(ParamList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

enum class Activation { kRelu, kTanh };

inline Var activate(Var x, Activation a) { return a == Activation::kRelu ? relu(x) : tanh(x); }
inline Matrix activate(const Matrix& x, Activation a) { return a == Activation::kRelu ? Matrix(x.cwiseMax(0.0)) : Matrix(x.array().tanh()); }

/// Dense stack with a hidden activation and a linear output layer.
struct Mlp {
  std::vector<Dense> layers;
  Activation hidden_activation = Activation::kRelu;

  Mlp() = default;
  Mlp(const std::vector<Eigen::Index>& widths, const std::string& name, std::mt19937_64& rng,
      Activation act = Activation::kRelu)
      : hidden_activation(act) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers.emplace_back(widths[i], widths[i + 1], name + "." + std::to_string(i), rng);
    }
  }

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  Var operator()(Tape& t, Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](t, x);
      if (i + 1 < layers.size()) x = activate(x, hidden_activation);
    }
    return x;
  }

  void collect(ParamList& out) {
    for (auto& l : layers) l.collect(out);
  }
};

/// Two-gate GRU cell:
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wh + (r * h) Uh + bh), h' = (1 - z) * h + z * c
struct GruCell {
  Parameter w_z, u_z, b_z;
  Parameter w_r, u_r, b_r;
  Parameter w_h, u_h, b_h;

  GruCell() = default;
  GruCell(Eigen::Index input, Eigen::Index hidden, const std::string& name, std::mt19937_64& rng)
      : w_z(name + ".w_z", glorot(input, hidden, rng)),
        u_z(name + ".u_z", glorot(hidden, hidden, rng)),
        b_z(name + ".b_z", Matrix::Zero(1, hidden)),
        w_r(name + ".w_r", glorot(input, hidden, rng)),
        u_r(name + ".u_r", glorot(hidden, hidden, rng)),
        b_r(name + ".b_r", Matrix::Zero(1, hidden)),
        w_h(name + ".w_h", glorot(input, hidden, rng)),
        u_h(name + ".u_h", glorot(hidden, hidden, rng)),
        b_h(name + ".b_h", Matrix::Zero(1, hidden)) {}

  Eigen::Index input_dim() const { return w_z.value.rows(); }
  Eigen::Index hidden_dim() const { return u_z.value.rows(); }

  Var operator()(Tape& t, Var x, Var h) {
    if (x.cols() != input_dim() || h.cols() != hidden_dim() || x.rows() != h.rows()) {
      throw std::invalid_argument("GruCell: dimension mismatch, input " + shape_str(x.value()) + ", hidden " +
                                  shape_str(h.value()));
    }
    auto gate = [&](Parameter& w, Parameter& u, Parameter& b, Var hh) {
      return add_row(add(matmul(x, t.param(w)), matmul(hh, t.param(u))), t.param(b));
    };
    Var z = sigmoid(gate(w_z, u_z, b_z, h));
    Var r = sigmoid(gate(w_r, u_r, b_r, h));
    Var cand = tanh(gate(w_h, u_h, b_h, mul(r, h)));
    // (1 - z) * h + z * c  ==  h + z * (c - h)
    return add(h, mul(z, sub(cand, h)));
  }

  void collect(ParamList& out) {
    for (Parameter* p : {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_h, &u_h, &b_h}) out.push_back(p);
  }
};

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm cap; 0 disables.
  double max_grad_norm = 0.0;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("optimizer: learning rate must be positive");
  }
};

/// Descent on the accumulated gradients of a fixed parameter list. Ascent is
/// expressed by differentiating the negated objective.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(ParamList params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }
  const ParamList& params() const { return params_; }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const Parameter* p : params_) s += p->grad.squaredNorm();
    return std::sqrt(s);
  }

  void step() {
    ++t_;
    double factor = 1.0;
    if (cfg_.max_grad_norm > 0) {
      const double n = grad_norm();
      if (n > cfg_.max_grad_norm) factor = cfg_.max_grad_norm / n;
    }
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (Parameter* p : params_) p->value -= lr * factor * p->grad;
      return;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter* p = params_[i];
      const Matrix g = p->grad * factor;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      p->value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
    }
  }

 private:
  ParamList params_;
  OptimizerConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

/// target <- tau * source + (1 - tau) * target, elementwise over matching lists.
inline void soft_update(const ParamList& target, const ParamList& source, double tau) {
  if (target.size() != source.size()) throw std::invalid_argument("soft_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->value.rows() != source[i]->value.rows() || target[i]->value.cols() != source[i]->value.cols()) {
      throw std::invalid_argument("soft_update: shape mismatch at " + target[i]->name);
    }
    target[i]->value = tau * source[i]->value + (1.0 - tau) * target[i]->value;
  }
}

}  // namespace gadc::nn
