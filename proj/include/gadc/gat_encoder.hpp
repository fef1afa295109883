#pragma once

// Observation pipeline: shared encoder -> two stacked multi-head graph
// attention layers -> [embedding, aggregate] -> GRU memory -> linear output.

#include "gadc/nn/layers.hpp"
#include "gadc/swarm_env.hpp"

#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gadc::gat {

using nn::Matrix;
using nn::Parameter;
using nn::Tape;
using nn::Var;

struct GatConfig {
  int raw_dim = env::ObservationLayout::kSize;
  int encoder_hidden = 256;
  int embed_dim = 256;
  int heads = 4;
  int hops = 2;
  int gru_hidden = 256;
  int output_dim = 256;

  int head_dim() const { return embed_dim / heads; }

  void validate() const {
    if (heads < 1) throw std::invalid_argument("gat: need at least one head");
    if (hops != 2) throw std::invalid_argument("gat: only the two-hop architecture is supported");
    if (embed_dim < heads || embed_dim % heads != 0) throw std::invalid_argument("gat: embed_dim must be a multiple of heads");
    if (raw_dim < 1 || encoder_hidden < 1 || gru_hidden < 1 || output_dim < 1) throw std::invalid_argument("gat: bad width");
  }
};

/// Attention neighborhood of every node: the node itself first, then its
/// graph neighbors in index order. Indices are global row indices.
using Neighborhoods = std::vector<std::vector<int>>;

inline void append_neighborhoods(Neighborhoods& out, const env::Graph& g) {
  const int offset = static_cast<int>(out.size());
  for (int n = 0; n < g.size(); ++n) {
    std::vector<int> hood{offset + n};
    for (int i : g.neighbors(n)) hood.push_back(offset + i);
    out.push_back(std::move(hood));
  }
}

inline Neighborhoods neighborhoods(const env::Graph& g) {
  Neighborhoods out;
  append_neighborhoods(out, g);
  return out;
}

/// Masked attention weights for every node, as a dense rows x rows matrix:
/// alpha(n, i) = softmax over i in hood(n) of ReLU(k_i . q_n), zero elsewhere.
inline Matrix attention_matrix(const Matrix& q, const Matrix& k, const Neighborhoods& hoods) {
  const Eigen::Index rows = q.rows();
  Matrix alpha = Matrix::Zero(rows, rows);
  for (Eigen::Index n = 0; n < rows; ++n) {
    const auto& hood = hoods[static_cast<std::size_t>(n)];
    std::vector<double> s(hood.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < hood.size(); ++j) {
      s[j] = std::max(0.0, k.row(hood[j]).dot(q.row(n)));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (double& v : s) z += (v = std::exp(v - mx));
    for (std::size_t j = 0; j < hood.size(); ++j) alpha(n, hood[j]) += s[j] / z;
  }
  return alpha;
}

/// Differentiable masked attention aggregation: row n of the result is
/// sum_{i in hood(n)} alpha(n, i) v_i.
inline Var graph_attention(Var q, Var k, Var v, std::shared_ptr<const Neighborhoods> hoods) {
  const Eigen::Index rows = q.rows();
  if (k.rows() != rows || v.rows() != rows || k.cols() != q.cols()) {
    throw std::invalid_argument("graph_attention: shape mismatch");
  }
  if (static_cast<Eigen::Index>(hoods->size()) != rows) throw std::invalid_argument("graph_attention: neighborhood count");
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

  // alpha and ReLU activity, flattened in neighborhood order
  auto alpha = std::make_shared<std::vector<double>>();
  auto active = std::make_shared<std::vector<char>>();
  Matrix out = Matrix::Zero(rows, v.cols());
  for (Eigen::Index n = 0; n < rows; ++n) {
    const auto& hood = (*hoods)[static_cast<std::size_t>(n)];
    if (hood.empty()) throw std::invalid_argument("graph_attention: empty neighborhood");
    const std::size_t base = alpha->size();
    double mx = -std::numeric_limits<double>::infinity();
    for (int i : hood) {
      const double pre = kv.row(i).dot(qv.row(n));
      active->push_back(pre > 0 ? 1 : 0);
      alpha->push_back(std::max(0.0, pre));
      mx = std::max(mx, alpha->back());
    }
    double z = 0.0;
    for (std::size_t j = base; j < alpha->size(); ++j) z += ((*alpha)[j] = std::exp((*alpha)[j] - mx));
    for (std::size_t j = 0; j < hood.size(); ++j) {
      (*alpha)[base + j] /= z;
      out.row(n) += (*alpha)[base + j] * vv.row(hood[j]);
    }
  }

  const std::size_t qi = q.id(), ki = k.id(), vi = v.id();
  const bool ng = q.tape().needs_grad(qi) || q.tape().needs_grad(ki) || q.tape().needs_grad(vi);
  return q.tape().push(std::move(out), ng, [qi, ki, vi, hoods, alpha, active](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& qv = tp.value(qi);
    const Matrix& kv = tp.value(ki);
    const Matrix& vv = tp.value(vi);
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
    Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
    std::size_t base = 0;
    std::vector<double> da;
    for (Eigen::Index n = 0; n < qv.rows(); ++n) {
      const auto& hood = (*hoods)[static_cast<std::size_t>(n)];
      da.resize(hood.size());
      double weighted = 0.0;
      for (std::size_t j = 0; j < hood.size(); ++j) {
        const double a = (*alpha)[base + j];
        dv.row(hood[j]) += a * g.row(n);
        da[j] = vv.row(hood[j]).dot(g.row(n));
        weighted += a * da[j];
      }
      for (std::size_t j = 0; j < hood.size(); ++j) {
        if (!(*active)[base + j]) continue;
        const double ds = (*alpha)[base + j] * (da[j] - weighted);
        dq.row(n) += ds * kv.row(hood[j]);
        dk.row(hood[j]) += ds * qv.row(n);
      }
      base += hood.size();
    }
    tp.accumulate(qi, dq);
    tp.accumulate(ki, dk);
    tp.accumulate(vi, dv);
  });
}

struct AttentionHead {
  Parameter w_q, w_k, w_v;
};

/// One multi-head attention layer; output is the concatenation of the heads.
struct GatLayer {
  std::vector<AttentionHead> heads;

  GatLayer() = default;
  GatLayer(int in_dim, int head_dim, int n_heads, const std::string& name, std::mt19937_64& rng) {
    for (int j = 0; j < n_heads; ++j) {
      const std::string p = name + ".h" + std::to_string(j);
      heads.push_back({Parameter(p + ".w_q", nn::glorot(in_dim, head_dim, rng)),
                       Parameter(p + ".w_k", nn::glorot(in_dim, head_dim, rng)),
                       Parameter(p + ".w_v", nn::glorot(in_dim, head_dim, rng))});
    }
  }

  Var operator()(Tape& t, Var x, const std::shared_ptr<const Neighborhoods>& hoods) {
    std::vector<Var> outs;
    outs.reserve(heads.size());
    for (auto& h : heads) {
      outs.push_back(graph_attention(nn::matmul(x, t.param(h.w_q)), nn::matmul(x, t.param(h.w_k)),
                                     nn::matmul(x, t.param(h.w_v)), hoods));
    }
    return outs.size() == 1 ? outs.front() : nn::concat_cols(outs);
  }

  /// Dense attention matrix of head `j` for layer input `x`.
  Matrix weights(const Matrix& x, const Neighborhoods& hoods, int j) const {
    const auto& h = heads.at(static_cast<std::size_t>(j));
    return attention_matrix(x * h.w_q.value, x * h.w_k.value, hoods);
  }

  void collect(nn::ParamList& out) {
    for (auto& h : heads) {
      out.push_back(&h.w_q);
      out.push_back(&h.w_k);
      out.push_back(&h.w_v);
    }
  }
};

/// Per-node intermediate and final pipeline values (one row per node).
struct GraphObservation {
  Matrix embedding;  // mu
  Matrix aggregate;  // g after the second attention layer
  Matrix hidden;     // h(t)
  Matrix output;     // O^G
};

class GatEncoder {
 public:
  struct Trace {
    Var embedding, layer1, layer2, hidden, output;
  };

  GatEncoder() = default;
  GatEncoder(const GatConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg_.validate();
    encoder_ = nn::Mlp({cfg.raw_dim, cfg.encoder_hidden, cfg.embed_dim}, "enc", rng);
    layer1_ = GatLayer(cfg.embed_dim, cfg.head_dim(), cfg.heads, "gat1", rng);
    layer2_ = GatLayer(cfg.embed_dim, cfg.head_dim(), cfg.heads, "gat2", rng);
    gru_ = nn::GruCell(2 * cfg.embed_dim, cfg.gru_hidden, "gru", rng);
    out_ = nn::Dense(cfg.gru_hidden, cfg.output_dim, "mem_out", rng);
  }

  const GatConfig& config() const { return cfg_; }
  nn::Mlp& encoder() { return encoder_; }
  GatLayer& layer(int i) { return i == 0 ? layer1_ : layer2_; }
  nn::GruCell& gru() { return gru_; }

  Var encode(Tape& t, Var raw) {
    if (raw.cols() != cfg_.raw_dim) throw std::invalid_argument("encode: raw observation layout mismatch");
    return encoder_(t, raw);
  }

  Trace forward(Tape& t, Var raw, const std::shared_ptr<const Neighborhoods>& hoods, Var hidden_prev) {
    Trace tr;
    tr.embedding = encode(t, raw);
    tr.layer1 = layer1_(t, tr.embedding, hoods);
    tr.layer2 = layer2_(t, tr.layer1, hoods);
    tr.hidden = gru_(t, nn::concat_cols({tr.embedding, tr.layer2}), hidden_prev);
    tr.output = out_(t, tr.hidden);
    return tr;
  }

  /// Gradient-free evaluation.
  GraphObservation observe(const Matrix& raw, const Neighborhoods& hoods, const Matrix& hidden_prev) {
    Tape t;
    auto h = std::make_shared<const Neighborhoods>(hoods);
    Trace tr = forward(t, t.constant(raw), h, t.constant(hidden_prev));
    return {tr.embedding.value(), tr.layer2.value(), tr.hidden.value(), tr.output.value()};
  }

  Matrix zero_hidden(Eigen::Index rows) const { return Matrix::Zero(rows, cfg_.gru_hidden); }

  void collect(nn::ParamList& out) {
    encoder_.collect(out);
    layer1_.collect(out);
    layer2_.collect(out);
    gru_.collect(out);
    out_.collect(out);
  }

 private:
  GatConfig cfg_;
  nn::Mlp encoder_;
  GatLayer layer1_, layer2_;
  nn::GruCell gru_;
  nn::Dense out_;
};

/// Attention weights of node `n` over all UAVs for head `j` of the first
/// layer, given the embeddings of every UAV.
inline std::vector<double> attention_weights(GatEncoder& enc, int n, const Matrix& embeddings, const env::Graph& graph,
                                             int j) {
  const Matrix a = enc.layer(0).weights(embeddings, neighborhoods(graph), j);
  std::vector<double> row(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index i = 0; i < a.cols(); ++i) row[static_cast<std::size_t>(i)] = a(n, i);
  return row;
}

/// Runs the pipeline for every UAV of a world state.
inline GraphObservation graph_observe(GatEncoder& enc, const env::WorldState& state, const env::Graph& graph,
                                      const env::Scenario& sc, const Matrix& hidden_prev) {
  const int n = state.num_uavs();
  Matrix raw(n, env::ObservationLayout::kSize);
  for (int i = 0; i < n; ++i) {
    const auto o = env::local_observation(state, i, graph, sc);
    for (int c = 0; c < env::ObservationLayout::kSize; ++c) raw(i, c) = o[static_cast<std::size_t>(c)];
  }
  return enc.observe(raw, neighborhoods(graph), hidden_prev);
}

}  // namespace gadc::gat
