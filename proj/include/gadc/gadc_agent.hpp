#pragma once

// Actor-double-critic learner.
//
// Every training step runs, in order:
//   1. coverage critic: TD regression of Q^c(s, a) onto r^c + gamma Q^c_target(s', pi(s'))
//   2. actor, coverage phase: ascend Q^c(s, pi(s)) through the soft action
//   3. soft update of the target coverage critic
//   4. snapshot pi^c(a|s) of the updated actor
//   5. actor, lifetime phase: up to T_epi ascents of the clipped surrogate on
//      the lifetime advantage, stopping early once KL(pi^f || pi^c) > kl_max
//   6. lifetime critic: TD regression of V^f(s) onto r^f + gamma V^f(s')
//
// With Objective::kWeighted the same machinery becomes a single-critic DDPG
// learner on phi r^c + (1 - phi) r^f (steps 4-6 are skipped).

#include "gadc/gat_encoder.hpp"
#include "gadc/nn/checkpoint.hpp"
#include "gadc/nn/layers.hpp"
#include "gadc/policy.hpp"
#include "gadc/swarm_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gadc::agent {

using nn::Matrix;
using nn::Tape;
using nn::Var;

inline constexpr int kNumActions = env::ActionSpace::kSize;

struct TrainConfig {
  double gamma = 0.95;
  double tau = 0.01;
  double clip_epsilon = 0.2;
  int inner_iterations = 4;
  int batch_size = 128;
  std::size_t buffer_capacity = 100000;
  double prob_floor = 1e-8;
  double kl_max = 0.05;
  /// Epsilon-greedy rate over the categorical sample, annealed linearly from
  /// start to end over the first `explore_fraction` of the episodes.
  double explore_start = 0.5;
  double explore_end = 0.05;
  double explore_fraction = 0.6;
  /// Gradient steps per slot; 0 means one per agent.
  int updates_per_slot = 0;
  /// Positive reward scales fed to the critics; 0 picks 1/M, 1/b_0 and
  /// 1/(phi M + (1 - phi) b_0) respectively.
  double coverage_scale = 0.0;
  double lifetime_scale = 0.0;
  double weighted_scale = 0.0;
  bool normalize_advantage = true;
  /// Critic input on the actor side: the soft action vector itself, or the
  /// policy-weighted sum of Q over one-hot actions.
  bool expected_q = true;
  int hidden = 256;
  gat::GatConfig gat;
  nn::OptimizerConfig actor_opt{nn::OptimizerKind::kAdam, 1e-4};
  nn::OptimizerConfig critic_opt{nn::OptimizerKind::kAdam, 1e-3};
  /// Lifetime critic loss also trains the graph encoder.
  bool lifetime_trains_encoder = false;
  /// Step size of the clipped lifetime updates; 0 reuses the actor's.
  double lifetime_actor_lr = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("train: gamma must be in [0,1)");
    if (!(tau > 0 && tau < 1)) throw std::invalid_argument("train: tau must be in (0,1)");
    if (!(clip_epsilon > 0 && clip_epsilon < 1)) throw std::invalid_argument("train: clip epsilon must be in (0,1)");
    if (inner_iterations < 0) throw std::invalid_argument("train: inner iterations must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (buffer_capacity < static_cast<std::size_t>(batch_size)) throw std::invalid_argument("train: buffer smaller than batch");
    if (!(prob_floor > 0 && prob_floor * kNumActions < 1)) throw std::invalid_argument("train: bad probability floor");
    if (!(kl_max > 0)) throw std::invalid_argument("train: kl_max must be positive");
    if (hidden < 1) throw std::invalid_argument("train: hidden width must be >= 1");
    if (updates_per_slot < 0) throw std::invalid_argument("train: updates_per_slot must be >= 0");
    if (!(lifetime_actor_lr >= 0)) throw std::invalid_argument("train: lifetime_actor_lr must be >= 0");
    gat.validate();
    actor_opt.validate();
    critic_opt.validate();
  }
};

// ---------------------------------------------------------------------------
// Policy head and objective pieces

/// Floored softmax: (1 - K floor) softmax(logits) + floor. Rows sum to one and
/// every entry is at least `floor`.
inline Var policy_probs(Var logits, double floor) {
  const double keep = 1.0 - floor * static_cast<double>(logits.cols());
  return nn::add_scalar(nn::scale(nn::softmax(logits), keep), floor);
}

inline Matrix policy_probs(const Matrix& logits, double floor) {
  Tape t;
  return policy_probs(t.constant(logits), floor).value();
}

struct PolicyOutput {
  std::vector<double> probs;
  int action = 0;
  double prob = 0.0;
};

/// explore=false takes the argmax (lowest index on ties); explore=true samples
/// the categorical, replaced by a uniform action with probability `random_rate`.
inline PolicyOutput choose_action(std::span<const double> probs, bool explore, double random_rate, std::mt19937_64& rng) {
  PolicyOutput out;
  out.probs.assign(probs.begin(), probs.end());
  if (!explore) {
    out.action = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (random_rate > 0 && u(rng) < random_rate) {
      out.action = std::uniform_int_distribution<int>(0, static_cast<int>(probs.size()) - 1)(rng);
    } else {
      std::discrete_distribution<int> d(probs.begin(), probs.end());
      out.action = d(rng);
    }
  }
  out.prob = probs[static_cast<std::size_t>(out.action)];
  return out;
}

inline double td_target(double r_c, double gamma, double q_next, bool done) { return done ? r_c : r_c + gamma * q_next; }

inline double lifetime_advantage(double r_f, double gamma, double v_next, double v, bool done) {
  return r_f + (done ? 0.0 : gamma * v_next) - v;
}

inline double probability_ratio(double pi_f, double pi_c) {
  if (!(pi_c > 0)) throw std::domain_error("probability_ratio: pi_c must be positive");
  return pi_f / pi_c;
}

/// E[min(F A, clip(F, 1 - eps, 1 + eps) A)] for a column of ratios F.
inline Var clipped_surrogate(Var ratio, const Matrix& advantage, double eps) {
  Tape& t = ratio.tape();
  Var adv = t.constant(advantage);
  Var unclipped = nn::mul(ratio, adv);
  Var clipped = nn::mul(nn::clip(ratio, 1.0 - eps, 1.0 + eps), adv);
  return nn::mean(nn::minimum(unclipped, clipped));
}

/// Mean over rows of KL(p || q), rows being distributions.
inline double empirical_kl(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw std::invalid_argument("empirical_kl: shape mismatch");
  if (p.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(r, c) > 0) total += p(r, c) * std::log(p(r, c) / q(r, c));
  return total / static_cast<double>(p.rows());
}

inline Matrix one_hot(std::span<const int> actions, int width) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), width);
  for (std::size_t r = 0; r < actions.size(); ++r) m(static_cast<Eigen::Index>(r), actions[r]) = 1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Replay

/// One joint slot of experience. Rewards are global and shared by all agents.
struct Transition {
  Matrix obs;          // N x raw
  Matrix next_obs;     // N x raw
  gat::Neighborhoods hood;       // local indices
  gat::Neighborhoods next_hood;  // local indices
  Matrix hidden;       // h(t-1), N x H; empty without memory
  Matrix next_hidden;  // h(t)
  std::vector<int> actions;
  double r_c = 0.0;
  double r_f = 0.0;
  bool done = false;

  int agents() const { return static_cast<int>(obs.rows()); }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  /// Uniform sampling with replacement.
  std::vector<std::size_t> sample(std::size_t batch, std::mt19937_64& rng) const {
    if (batch == 0 || items_.size() < batch) throw std::logic_error("ReplayBuffer: not enough transitions to sample");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// Transitions stacked into agent rows.
struct Batch {
  Matrix obs, next_obs, hidden, next_hidden;
  std::shared_ptr<const gat::Neighborhoods> hood, next_hood;
  std::vector<int> actions;
  Matrix r_c, r_f, not_done;  // rows x 1

  Eigen::Index rows() const { return obs.rows(); }
};

inline Batch make_batch(const std::vector<const Transition*>& items) {
  if (items.empty()) throw std::invalid_argument("make_batch: empty batch");
  Eigen::Index rows = 0;
  for (const auto* t : items) rows += t->agents();
  const Eigen::Index raw = items.front()->obs.cols();
  const Eigen::Index hid = items.front()->hidden.cols();
  Batch b;
  b.obs.resize(rows, raw);
  b.next_obs.resize(rows, raw);
  b.hidden.resize(rows, hid);
  b.next_hidden.resize(rows, hid);
  b.r_c.resize(rows, 1);
  b.r_f.resize(rows, 1);
  b.not_done.resize(rows, 1);
  gat::Neighborhoods hood, next_hood;
  Eigen::Index r = 0;
  for (const auto* t : items) {
    const Eigen::Index n = t->agents();
    b.obs.middleRows(r, n) = t->obs;
    b.next_obs.middleRows(r, n) = t->next_obs;
    if (hid > 0) {
      b.hidden.middleRows(r, n) = t->hidden;
      b.next_hidden.middleRows(r, n) = t->next_hidden;
    }
    for (const auto& h : t->hood) {
      hood.emplace_back();
      for (int i : h) hood.back().push_back(static_cast<int>(r) + i);
    }
    for (const auto& h : t->next_hood) {
      next_hood.emplace_back();
      for (int i : h) next_hood.back().push_back(static_cast<int>(r) + i);
    }
    b.actions.insert(b.actions.end(), t->actions.begin(), t->actions.end());
    b.r_c.middleRows(r, n).setConstant(t->r_c);
    b.r_f.middleRows(r, n).setConstant(t->r_f);
    b.not_done.middleRows(r, n).setConstant(t->done ? 0.0 : 1.0);
    r += n;
  }
  b.hood = std::make_shared<const gat::Neighborhoods>(std::move(hood));
  b.next_hood = std::make_shared<const gat::Neighborhoods>(std::move(next_hood));
  return b;
}

// ---------------------------------------------------------------------------
// Learner

enum class Objective { kDual, kWeighted };
enum class Features { kGraph, kRaw };

struct LearnerSpec {
  Features features = Features::kGraph;
  Objective objective = Objective::kDual;
  double phi = 0.5;  // weighted objective only
};

struct StepLosses {
  double critic_c = 0.0;
  double actor_c = 0.0;  // -mean Q^c(s, pi(s)) before the step
  double critic_f = 0.0;
  double clip_objective = 0.0;  // last inner-loop surrogate value
  double kl = 0.0;              // KL(pi^f || pi^c) after the inner loop
  int inner_steps = 0;
};

inline std::string to_string(LearnerSpec s) {
  if (s.objective == Objective::kDual) return "gadc";
  return s.features == Features::kGraph ? "gat-maddpg" : "maddpg";
}

class Learner final : public Policy {
 public:
  Learner(env::Scenario sc, TrainConfig cfg, LearnerSpec spec)
      : sc_(std::move(sc)), cfg_(std::move(cfg)), spec_(spec), buffer_(cfg_.buffer_capacity), rng_(cfg_.seed) {
    sc_.validate();
    cfg_.validate();
    if (spec_.objective == Objective::kWeighted && !(spec_.phi > 0 && spec_.phi <= 1)) {
      throw std::invalid_argument("weighted objective needs phi in (0,1]");
    }
    nets_ = std::make_unique<Nets>(cfg_, spec_, rng_);
    nets_->build_optimizers(cfg_, spec_);
  }

  const TrainConfig& config() const { return cfg_; }
  const LearnerSpec& spec() const { return spec_; }
  const env::Scenario& scenario() const { return sc_; }
  ReplayBuffer& buffer() { return buffer_; }
  std::mt19937_64& rng() { return rng_; }

  gat::GatEncoder* encoder() { return spec_.features == Features::kGraph ? &nets_->encoder : nullptr; }
  nn::Mlp& actor() { return nets_->actor; }
  nn::Mlp& coverage_critic() { return nets_->critic_c; }
  nn::Mlp& target_critic() { return nets_->critic_target; }
  nn::Mlp& lifetime_critic() { return nets_->critic_f; }

  nn::ParamList actor_params() { return collect(nets_->actor); }
  nn::ParamList coverage_critic_params() { return collect(nets_->critic_c); }
  nn::ParamList target_critic_params() { return collect(nets_->critic_target); }
  nn::ParamList lifetime_critic_params() { return collect(nets_->critic_f); }
  nn::ParamList encoder_params() {
    nn::ParamList p;
    if (spec_.features == Features::kGraph) nets_->encoder.collect(p);
    return p;
  }
  nn::ParamList all_params() {
    nn::ParamList p = encoder_params();
    for (auto* m : {&nets_->actor, &nets_->critic_c, &nets_->critic_target, &nets_->critic_f}) m->collect(p);
    return p;
  }

  bool shares_encoder() const { return cfg_.lifetime_trains_encoder && spec_.features == Features::kGraph; }

  int feature_dim() const {
    return spec_.features == Features::kGraph ? cfg_.gat.output_dim : env::ObservationLayout::kSize;
  }
  int hidden_dim() const { return spec_.features == Features::kGraph ? cfg_.gat.gru_hidden : 0; }

  double coverage_scale() const {
    return cfg_.coverage_scale > 0 ? cfg_.coverage_scale : 1.0 / sc_.world.num_uts;
  }
  double lifetime_scale() const {
    return cfg_.lifetime_scale > 0 ? cfg_.lifetime_scale : 1.0 / sc_.energy.initial_battery;
  }
  double weighted_scale() const {
    if (cfg_.weighted_scale > 0) return cfg_.weighted_scale;
    return 1.0 / (spec_.phi * sc_.world.num_uts + (1.0 - spec_.phi) * sc_.energy.initial_battery);
  }

  /// Critic-side reward of the coverage/primary critic.
  double primary_reward(double r_c, double r_f) const {
    if (spec_.objective == Objective::kDual) return coverage_scale() * r_c;
    return weighted_scale() * (spec_.phi * r_c + (1.0 - spec_.phi) * r_f);
  }

  /// Records the name of every update phase, in order, when enabled.
  void record_calls(bool on) { record_ = on; }
  const std::vector<std::string>& call_log() const { return calls_; }

  // --- features -----------------------------------------------------------

  /// Differentiable features of a batch side; raw mode returns a constant.
  Var features(Tape& t, const Matrix& obs, const std::shared_ptr<const gat::Neighborhoods>& hood, const Matrix& hidden) {
    if (spec_.features == Features::kRaw) return t.constant(obs);
    return nets_->encoder.forward(t, t.constant(obs), hood, t.constant(hidden)).output;
  }

  Matrix features_value(const Matrix& obs, const std::shared_ptr<const gat::Neighborhoods>& hood, const Matrix& hidden) {
    Tape t;
    return features(t, obs, hood, hidden).value();
  }

  Matrix probs(const Matrix& feats) {
    Tape t;
    return policy_probs(nets_->actor(t, t.constant(feats)), cfg_.prob_floor).value();
  }

  Matrix q_value(nn::Mlp& critic, const Matrix& feats, const Matrix& action_probs) {
    Tape t;
    return critic(t, nn::concat_cols({t.constant(feats), t.constant(action_probs)})).value();
  }

  /// Q at every one-hot action: rows x K.
  Matrix q_all(nn::Mlp& critic, const Matrix& feats) {
    const Eigen::Index n = feats.rows(), f = feats.cols();
    const auto& first = critic.layers.front();
    const Matrix base = (feats * first.weight.value.topRows(f)).rowwise() + first.bias.value.row(0);
    Matrix h(n * kNumActions, base.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int a = 0; a < kNumActions; ++a) h.row(r * kNumActions + a) = base.row(r) + first.weight.value.row(f + a);
    }
    for (std::size_t i = 1; i < critic.layers.size(); ++i) {
      h = nn::activate(h, critic.hidden_activation);
      h = (h * critic.layers[i].weight.value).rowwise() + critic.layers[i].bias.value.row(0);
    }
    return h.reshaped<Eigen::RowMajor>(n, kNumActions);
  }

  Matrix v_value(const Matrix& feats) {
    Tape t;
    return nets_->critic_f(t, t.constant(feats)).value();
  }

  // --- update phases ------------------------------------------------------

  double update_coverage_critic(const Batch& b, const Matrix& y) {
    log("critic_c");
    if (b.rows() == 0) throw std::invalid_argument("update_coverage_critic: empty batch");
    Tape t;
    Var f = features(t, b.obs, b.hood, b.hidden);
    Var q = nets_->critic_c(t, nn::concat_cols({f, t.constant(one_hot(b.actions, kNumActions))}));
    Var loss = nn::mse(q, t.constant(y));
    nets_->critic_opt->zero_grad();
    t.backward(loss);
    nets_->critic_opt->step();
    return loss.scalar();
  }

  /// One ascent step of E[Q^c(s, pi(s))] on the actor; returns -E[Q^c] before
  /// the step.
  double update_actor_coverage(const Matrix& feats) {
    log("actor_c");
    Tape t;
    Var p = policy_probs(nets_->actor(t, t.constant(feats)), cfg_.prob_floor);
    Var loss;
    if (cfg_.expected_q) {
      Var q = t.constant(q_all(nets_->critic_c, feats));
      loss = nn::scale(nn::sum(nn::mul(p, q)), -1.0 / static_cast<double>(feats.rows()));
    } else {
      Var q = nets_->critic_c(t, nn::concat_cols({t.constant(feats), p}));
      loss = nn::scale(nn::mean(q), -1.0);
    }
    nets_->actor_c_opt->zero_grad();
    t.backward(loss);
    for (auto* prm : coverage_critic_params()) prm->zero_grad();
    nets_->actor_c_opt->step();
    return loss.scalar();
  }

  void soft_update_target() {
    log("soft_update");
    nn::soft_update(target_critic_params(), coverage_critic_params(), cfg_.tau);
  }

  /// One ascent step of the clipped surrogate; returns its value before the step.
  double update_actor_lifetime(const Matrix& feats, const std::vector<int>& actions, const Matrix& pi_c_taken,
                               const Matrix& advantage) {
    log("actor_f");
    Tape t;
    Var p = policy_probs(nets_->actor(t, t.constant(feats)), cfg_.prob_floor);
    Var ratio = nn::div(nn::gather_cols(p, actions), t.constant(pi_c_taken));
    Var obj = clipped_surrogate(ratio, advantage, cfg_.clip_epsilon);
    nets_->actor_f_opt->zero_grad();
    t.backward(nn::scale(obj, -1.0));
    nets_->actor_f_opt->step();
    return obj.scalar();
  }

  double update_lifetime_critic(const Matrix& feats, const Matrix& target) {
    log("critic_f");
    Tape t;
    Var v = nets_->critic_f(t, t.constant(feats));
    Var loss = nn::mse(v, t.constant(target));
    nets_->critic_f_opt->zero_grad();
    t.backward(loss);
    nets_->critic_f_opt->step();
    return loss.scalar();
  }

  /// Same loss on features recomputed from the batch, so the encoder gets
  /// the lifetime critic's gradient too.
  double update_lifetime_critic(const Batch& b, const Matrix& target) {
    log("critic_f");
    Tape t;
    Var v = nets_->critic_f(t, features(t, b.obs, b.hood, b.hidden));
    Var loss = nn::mse(v, t.constant(target));
    nets_->critic_f_opt->zero_grad();
    t.backward(loss);
    nets_->critic_f_opt->step();
    return loss.scalar();
  }

  /// Full training step on one batch.
  StepLosses train_step(const Batch& b) {
    StepLosses out;
    const double g = cfg_.gamma;

    const Matrix next_feats = features_value(b.next_obs, b.next_hood, b.next_hidden);
    const Matrix next_probs = probs(next_feats);
    const Matrix q_next = cfg_.expected_q
                              ? Matrix(next_probs.cwiseProduct(q_all(nets_->critic_target, next_feats)).rowwise().sum())
                              : q_value(nets_->critic_target, next_feats, next_probs);
    Matrix r_primary(b.rows(), 1);
    for (Eigen::Index r = 0; r < b.rows(); ++r) r_primary(r, 0) = primary_reward(b.r_c(r, 0), b.r_f(r, 0));
    const Matrix y = r_primary + g * b.not_done.cwiseProduct(q_next);

    out.critic_c = update_coverage_critic(b, y);
    const Matrix feats = features_value(b.obs, b.hood, b.hidden);
    out.actor_c = update_actor_coverage(feats);
    soft_update_target();
    if (spec_.objective == Objective::kWeighted) return out;

    log("snapshot");
    const Matrix pi_c = probs(feats);
    Matrix pi_c_taken(b.rows(), 1);
    for (Eigen::Index r = 0; r < b.rows(); ++r) pi_c_taken(r, 0) = pi_c(r, b.actions[static_cast<std::size_t>(r)]);

    const Matrix r_f = b.r_f * lifetime_scale();
    const Matrix v_now = v_value(feats);
    const Matrix v_next = v_value(next_feats);
    const Matrix f_target = r_f + g * b.not_done.cwiseProduct(v_next);
    Matrix adv = f_target - v_now;
    if (cfg_.normalize_advantage && adv.rows() > 1) {
      const double mu = adv.mean();
      const double sd = std::sqrt((adv.array() - mu).square().mean());
      adv = (adv.array() - mu) / (sd + 1e-8);
    }

    for (int k = 0; k < cfg_.inner_iterations; ++k) {
      if (k > 0 && empirical_kl(probs(feats), pi_c) > cfg_.kl_max) break;
      out.clip_objective = update_actor_lifetime(feats, b.actions, pi_c_taken, adv);
      ++out.inner_steps;
    }
    out.kl = empirical_kl(probs(feats), pi_c);
    out.critic_f = shares_encoder() ? update_lifetime_critic(b, f_target) : update_lifetime_critic(feats, f_target);
    return out;
  }

  StepLosses train_step() {
    const auto idx = buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
    log("sample");
    std::vector<const Transition*> items;
    items.reserve(idx.size());
    for (auto i : idx) items.push_back(&buffer_.at(i));
    return train_step(make_batch(items));
  }

  // --- acting ---------------------------------------------------------------

  void begin_episode(const env::World& w) override {
    hidden_ = Matrix::Zero(w.state().num_uavs(), hidden_dim());
  }

  /// Observation matrix and local neighborhoods of the current world state.
  static std::pair<Matrix, gat::Neighborhoods> observe(const env::World& w) {
    const int n = w.state().num_uavs();
    Matrix raw(n, env::ObservationLayout::kSize);
    for (int i = 0; i < n; ++i) {
      const auto o = w.observe(i);
      for (int c = 0; c < raw.cols(); ++c) raw(i, c) = o[static_cast<std::size_t>(c)];
    }
    return {std::move(raw), gat::neighborhoods(w.graph())};
  }

  struct Decision {
    std::vector<PolicyOutput> outputs;
    Matrix next_hidden;
  };

  Decision decide(const Matrix& obs, const gat::Neighborhoods& hood, bool explore) {
    Decision d;
    Matrix feats;
    if (spec_.features == Features::kGraph) {
      if (hidden_.rows() != obs.rows()) hidden_ = Matrix::Zero(obs.rows(), hidden_dim());
      auto go = nets_->encoder.observe(obs, hood, hidden_);
      feats = std::move(go.output);
      d.next_hidden = std::move(go.hidden);
    } else {
      feats = obs;
      d.next_hidden = Matrix(obs.rows(), 0);
    }
    const Matrix p = probs(feats);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(p.cols()));
      for (Eigen::Index c = 0; c < p.cols(); ++c) row[static_cast<std::size_t>(c)] = p(r, c);
      d.outputs.push_back(choose_action(row, explore, explore ? explore_rate_ : 0.0, rng_));
    }
    return d;
  }

  std::vector<int> act(const env::World& w, bool explore) override {
    auto [obs, hood] = observe(w);
    Decision d = decide(obs, hood, explore);
    hidden_ = d.next_hidden;
    std::vector<int> a;
    for (const auto& o : d.outputs) a.push_back(o.action);
    return a;
  }

  void set_explore_rate(double r) { explore_rate_ = r; }
  double explore_rate() const { return explore_rate_; }

  double scheduled_explore_rate(int episode, int total) const {
    const double span = std::max(1.0, cfg_.explore_fraction * total);
    const double frac = std::min(1.0, episode / span);
    return cfg_.explore_start + (cfg_.explore_end - cfg_.explore_start) * frac;
  }

  /// Plays and learns from one episode.
  EpisodeMetrics train_episode(env::World& world, std::uint64_t world_seed, int episode) {
    world.reset(world_seed);
    begin_episode(world);
    EpisodeMetrics m;
    m.episode = episode;
    double disc = 1.0;
    int updates = 0;
    const int per_slot = cfg_.updates_per_slot > 0 ? cfg_.updates_per_slot : world.state().num_uavs();
    auto [obs, hood] = observe(world);
    while (!world.done()) {
      Decision d = decide(obs, hood, true);
      std::vector<int> actions;
      for (const auto& o : d.outputs) actions.push_back(o.action);
      const auto r = world.step(actions);
      auto [next_obs, next_hood] = observe(world);

      Transition tr;
      tr.obs = obs;
      tr.next_obs = next_obs;
      tr.hood = hood;
      tr.next_hood = next_hood;
      tr.hidden = hidden_;
      tr.next_hidden = d.next_hidden;
      tr.actions = actions;
      tr.r_c = r.reward.coverage;
      tr.r_f = r.reward.lifetime;
      tr.done = r.terminated;
      buffer_.push(std::move(tr));

      if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
        for (int u = 0; u < per_slot; ++u) {
          const StepLosses l = train_step();
          m.critic_loss_c += l.critic_c;
          m.actor_loss += l.actor_c;
          m.critic_loss_f += l.critic_f;
          m.mean_kl += l.kl;
          ++updates;
        }
      }

      hidden_ = d.next_hidden;
      obs = std::move(next_obs);
      hood = std::move(next_hood);
      m.sum_r_c += r.reward.coverage;
      m.return_c += disc * r.reward.coverage;
      m.return_f += disc * r.reward.lifetime;
      m.final_min_energy = r.reward.lifetime;
      disc *= cfg_.gamma;
      ++m.slots;
    }
    if (updates > 0) {
      m.critic_loss_c /= updates;
      m.actor_loss /= updates;
      m.critic_loss_f /= updates;
      m.mean_kl /= updates;
    }
    m.lifetime = world.lifetime();
    return m;
  }

  /// Runs `episodes` training episodes on fresh layouts derived from the seed.
  std::vector<EpisodeMetrics> train(int episodes) {
    env::World world(sc_);
    std::vector<EpisodeMetrics> out;
    for (int e = 0; e < episodes; ++e) {
      explore_rate_ = scheduled_explore_rate(e, episodes);
      out.push_back(train_episode(world, train_episode_seed(cfg_.seed, episodes_seen_), e));
      ++episodes_seen_;
    }
    return out;
  }

  // --- persistence ------------------------------------------------------------

  nn::Checkpoint checkpoint() {
    nn::Checkpoint ck;
    ck.meta["agent"] = to_string(spec_);
    ck.meta["hidden"] = std::to_string(cfg_.hidden);
    ck.meta["gat.encoder_hidden"] = std::to_string(cfg_.gat.encoder_hidden);
    ck.meta["gat.embed_dim"] = std::to_string(cfg_.gat.embed_dim);
    ck.meta["gat.heads"] = std::to_string(cfg_.gat.heads);
    ck.meta["gat.gru_hidden"] = std::to_string(cfg_.gat.gru_hidden);
    ck.meta["gat.output_dim"] = std::to_string(cfg_.gat.output_dim);
    ck.meta["phi"] = std::to_string(spec_.phi);
    nn::append_params(ck, all_params());
    return ck;
  }

  void restore(const nn::Checkpoint& ck) { nn::restore_params(ck, all_params()); }

 private:
  struct Nets {
    gat::GatEncoder encoder;
    nn::Mlp actor, critic_c, critic_target, critic_f;
    std::unique_ptr<nn::Optimizer> critic_opt, actor_c_opt, actor_f_opt, critic_f_opt;

    Nets(const TrainConfig& cfg, const LearnerSpec& spec, std::mt19937_64& rng) {
      Eigen::Index feat = env::ObservationLayout::kSize;
      if (spec.features == Features::kGraph) {
        encoder = gat::GatEncoder(cfg.gat, rng);
        feat = cfg.gat.output_dim;
      }
      const Eigen::Index h = cfg.hidden;
      actor = nn::Mlp({feat, h, h, kNumActions}, "actor", rng);
      critic_c = nn::Mlp({feat + kNumActions, h, h, 1}, "critic_c", rng);
      critic_target = critic_c;
      for (auto& l : critic_target.layers) {
        l.weight.name.replace(0, 8, "critic_t");
        l.bias.name.replace(0, 8, "critic_t");
      }
      critic_f = nn::Mlp({feat, h, h, 1}, "critic_f", rng);
    }

    void build_optimizers(const TrainConfig& cfg, const LearnerSpec& spec) {
      nn::ParamList cp;
      if (spec.features == Features::kGraph) encoder.collect(cp);
      critic_c.collect(cp);
      nn::ParamList ap, fp;
      actor.collect(ap);
      if (cfg.lifetime_trains_encoder && spec.features == Features::kGraph) encoder.collect(fp);
      critic_f.collect(fp);
      critic_opt = std::make_unique<nn::Optimizer>(cp, cfg.critic_opt);
      actor_c_opt = std::make_unique<nn::Optimizer>(ap, cfg.actor_opt);
      nn::OptimizerConfig f = cfg.actor_opt;
      if (cfg.lifetime_actor_lr > 0) f.learning_rate = cfg.lifetime_actor_lr;
      actor_f_opt = std::make_unique<nn::Optimizer>(ap, f);
      critic_f_opt = std::make_unique<nn::Optimizer>(fp, cfg.critic_opt);
    }
  };

  static nn::ParamList collect(nn::Mlp& m) {
    nn::ParamList p;
    m.collect(p);
    return p;
  }

  void log(const char* phase) {
    if (record_) calls_.emplace_back(phase);
  }

  env::Scenario sc_;
  TrainConfig cfg_;
  LearnerSpec spec_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::unique_ptr<Nets> nets_;
  Matrix hidden_;
  double explore_rate_ = 0.0;
  int episodes_seen_ = 0;
  bool record_ = false;
  std::vector<std::string> calls_;
};

}  // namespace gadc::agent
