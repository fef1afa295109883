#pragma once

// Exact policy-difference certification on finite MDPs.
//
// Returns and occupancies come from dense linear solves:
//   V = (I - gamma P_pi)^{-1} r_pi,  J = rho0 . V
//   d = (1 - gamma) rho0^T (I - gamma P_pi)^{-1}

#include "gadc/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gadc::bounds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kStochasticTol = 1e-12;

struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  /// P[a](s, s') = P(s' | s, a)
  std::vector<Matrix> kernel;
  Matrix reward;  // |S| x |A|
  Vector initial;
  double gamma = 0.9;

  void validate() const {
    if (num_states < 1 || num_actions < 1) throw std::invalid_argument("mdp: empty state or action set");
    if (!(gamma >= 0 && gamma < 1)) throw std::invalid_argument("mdp: gamma must be in [0,1)");
    if (static_cast<int>(kernel.size()) != num_actions) throw std::invalid_argument("mdp: one kernel per action");
    for (const auto& p : kernel) {
      if (p.rows() != num_states || p.cols() != num_states) throw std::invalid_argument("mdp: kernel shape");
      if ((p.array() < 0).any()) throw std::invalid_argument("mdp: negative transition probability");
      for (int s = 0; s < num_states; ++s)
        if (std::abs(p.row(s).sum() - 1.0) > kStochasticTol) throw std::invalid_argument("mdp: kernel row not stochastic");
    }
    if (reward.rows() != num_states || reward.cols() != num_actions) throw std::invalid_argument("mdp: reward shape");
    if (initial.size() != num_states || (initial.array() < 0).any() || std::abs(initial.sum() - 1.0) > kStochasticTol) {
      throw std::invalid_argument("mdp: initial distribution not stochastic");
    }
  }
};

/// pi(s, a), rows stochastic.
struct TabularPolicy {
  Matrix probs;

  void validate(const TabularMdp& m) const {
    if (probs.rows() != m.num_states || probs.cols() != m.num_actions) throw std::invalid_argument("policy: shape");
    if ((probs.array() < 0).any()) throw std::invalid_argument("policy: negative probability");
    for (int s = 0; s < m.num_states; ++s)
      if (std::abs(probs.row(s).sum() - 1.0) > kStochasticTol) throw std::invalid_argument("policy: row not stochastic");
  }
};

struct BoundConfig {
  double delta = 0.0;
  double tolerance = 1e-9;

  void validate() const {
    if (!(delta >= 0)) throw std::invalid_argument("bound config: delta must be >= 0");
  }
};

/// State-to-state kernel under pi.
inline Matrix policy_kernel(const TabularMdp& m, const TabularPolicy& pi) {
  Matrix p = Matrix::Zero(m.num_states, m.num_states);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) p.row(s) += pi.probs(s, a) * m.kernel[static_cast<std::size_t>(a)].row(s);
  return p;
}

inline Vector policy_reward(const TabularMdp& m, const TabularPolicy& pi) {
  return m.reward.cwiseProduct(pi.probs).rowwise().sum();
}

inline Vector state_values(const TabularMdp& m, const TabularPolicy& pi) {
  m.validate();
  pi.validate(m);
  const Matrix a = Matrix::Identity(m.num_states, m.num_states) - m.gamma * policy_kernel(m, pi);
  return a.partialPivLu().solve(policy_reward(m, pi));
}

inline double exact_return(const TabularMdp& m, const TabularPolicy& pi) { return m.initial.dot(state_values(m, pi)); }

/// Normalised discounted state occupancy; sums to one.
inline Vector occupancy(const TabularMdp& m, const TabularPolicy& pi) {
  m.validate();
  pi.validate(m);
  const Matrix a = Matrix::Identity(m.num_states, m.num_states) - m.gamma * policy_kernel(m, pi);
  return (1.0 - m.gamma) * a.transpose().partialPivLu().solve(m.initial);
}

inline Matrix q_values(const TabularMdp& m, const TabularPolicy& pi) {
  const Vector v = state_values(m, pi);
  Matrix q(m.num_states, m.num_actions);
  for (int a = 0; a < m.num_actions; ++a) q.col(a) = m.reward.col(a) + m.gamma * m.kernel[static_cast<std::size_t>(a)] * v;
  return q;
}

/// A(s, a) = Q(s, a) - V(s).
inline Matrix advantage_exact(const TabularMdp& m, const TabularPolicy& pi) {
  const Vector v = state_values(m, pi);
  Matrix q = q_values(m, pi);
  return q.colwise() - v;
}

// ---------------------------------------------------------------------------
// Divergences

inline double tv_distance(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: size mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

inline double tv_distance(const TabularPolicy& f, const TabularPolicy& c, int s) {
  return tv_distance(f.probs.row(s).transpose(), c.probs.row(s).transpose());
}

inline double expected_tv(const TabularPolicy& f, const TabularPolicy& c, const Vector& d) {
  double e = 0.0;
  for (Eigen::Index s = 0; s < d.size(); ++s) e += d(s) * tv_distance(f, c, static_cast<int>(s));
  return e;
}

inline double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double k = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0) continue;
    if (!(q(i) > 0)) throw std::domain_error("kl_divergence: support of p not contained in support of q");
    k += p(i) * std::log(p(i) / q(i));
  }
  return k;
}

inline double kl_divergence(const TabularPolicy& f, const TabularPolicy& c, int s) {
  return kl_divergence(f.probs.row(s).transpose(), c.probs.row(s).transpose());
}

inline double expected_kl(const TabularPolicy& f, const TabularPolicy& c, const Vector& d) {
  double e = 0.0;
  for (Eigen::Index s = 0; s < d.size(); ++s) e += d(s) * kl_divergence(f, c, static_cast<int>(s));
  return e;
}

/// E_{a ~ pi}[A(s, a)] per state.
inline Vector expected_advantage(const TabularPolicy& pi, const Matrix& adv) { return adv.cwiseProduct(pi.probs).rowwise().sum(); }

// ---------------------------------------------------------------------------
// Certification

struct TvOccupancyReport {
  double lhs = 0.0;  // D_TV(d^f || d^c)
  double rhs = 0.0;  // gamma / (1 - gamma) E_{d^c}[D_TV(pi^f || pi^c)]
  bool pass = false;
};

inline TvOccupancyReport verify_tv_occupancy_bound(const TabularMdp& m, const TabularPolicy& f, const TabularPolicy& c,
                                                   double tolerance = 1e-9) {
  const Vector df = occupancy(m, f);
  const Vector dc = occupancy(m, c);
  TvOccupancyReport r;
  r.lhs = tv_distance(df, dc);
  r.rhs = m.gamma / (1.0 - m.gamma) * expected_tv(f, c, dc);
  r.pass = r.lhs <= r.rhs + tolerance;
  return r;
}

struct PinskerReport {
  double expected_tv = 0.0;       // E_{d^c}[D_TV]
  double expected_sqrt_kl = 0.0;  // E_{d^c}[sqrt(D_KL / 2)]
  bool pass = false;
};

inline PinskerReport verify_pinsker(const TabularMdp& m, const TabularPolicy& f, const TabularPolicy& c,
                                    double tolerance = 1e-9) {
  const Vector dc = occupancy(m, c);
  PinskerReport r;
  r.expected_tv = expected_tv(f, c, dc);
  for (int s = 0; s < m.num_states; ++s) r.expected_sqrt_kl += dc(s) * std::sqrt(kl_divergence(f, c, s) / 2.0);
  r.pass = r.expected_tv <= r.expected_sqrt_kl + tolerance;
  return r;
}

struct Lemma1Report {
  double gamma = 0.0;
  double delta = 0.0;   // E_{d^c}[KL(pi^f || pi^c)]
  double max_kl = 0.0;  // max_s KL(pi^f || pi^c)[s]
  double lhs = 0.0;     // J^c(pi^f) - J^c(pi^c)
  double center = 0.0;  // E_{d^c, pi^f}[A^c] / (1 - gamma)
  double epsilon = 0.0;
  double slack = 0.0;     // sqrt(2 delta) gamma epsilon / (1 - gamma)^2
  double slack_lo = 0.0;  // lhs - (center - slack)
  double slack_hi = 0.0;  // (center + slack) - lhs
  double identity_error = 0.0;  // |lhs - E_{d^f, pi^f}[A^c] / (1 - gamma)|
  bool sandwich_pass = false;
  bool identity_pass = false;

  bool pass() const { return sandwich_pass && identity_pass; }
};

/// Checks both sides of the performance-difference sandwich with delta set to
/// the expected KL under d^{pi^c}, plus the exact identity under d^{pi^f}.
inline Lemma1Report verify_lemma1(const TabularMdp& m, const TabularPolicy& f, const TabularPolicy& c,
                                  double tolerance = 1e-9) {
  const double g = m.gamma;
  const Matrix adv_c = advantage_exact(m, c);
  const Vector ea = expected_advantage(f, adv_c);
  const Vector dc = occupancy(m, c);
  const Vector df = occupancy(m, f);
  Lemma1Report r;
  r.gamma = g;
  r.delta = expected_kl(f, c, dc);
  for (int s = 0; s < m.num_states; ++s) r.max_kl = std::max(r.max_kl, kl_divergence(f, c, s));
  r.lhs = exact_return(m, f) - exact_return(m, c);
  r.center = dc.dot(ea) / (1.0 - g);
  r.epsilon = ea.cwiseAbs().maxCoeff();
  r.slack = std::sqrt(2.0 * r.delta) * g * r.epsilon / ((1.0 - g) * (1.0 - g));
  r.slack_lo = r.lhs - (r.center - r.slack);
  r.slack_hi = (r.center + r.slack) - r.lhs;
  r.identity_error = std::abs(r.lhs - df.dot(ea) / (1.0 - g));
  r.sandwich_pass = r.slack_lo >= -tolerance && r.slack_hi >= -tolerance;
  r.identity_pass = r.identity_error <= tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Random instances

inline Vector dirichlet_ones(int k, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(k);
  for (int i = 0; i < k; ++i) v(i) = e(rng);
  return v / v.sum();
}

struct RandomMdpConfig {
  int max_states = 4;
  int max_actions = 3;
  double gamma_min = 0.1;
  double gamma_max = 0.9;
};

inline TabularMdp random_mdp(std::mt19937_64& rng, const RandomMdpConfig& cfg = {}) {
  TabularMdp m;
  m.num_states = std::uniform_int_distribution<int>(1, cfg.max_states)(rng);
  m.num_actions = std::uniform_int_distribution<int>(1, cfg.max_actions)(rng);
  m.gamma = std::uniform_real_distribution<double>(cfg.gamma_min, cfg.gamma_max)(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int a = 0; a < m.num_actions; ++a) {
    Matrix p(m.num_states, m.num_states);
    for (int s = 0; s < m.num_states; ++s) p.row(s) = dirichlet_ones(m.num_states, rng).transpose();
    m.kernel.push_back(std::move(p));
  }
  m.reward.resize(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) m.reward(s, a) = u(rng);
  m.initial = dirichlet_ones(m.num_states, rng);
  return m;
}

inline TabularPolicy random_policy(const TabularMdp& m, std::mt19937_64& rng) {
  TabularPolicy pi;
  pi.probs.resize(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s) pi.probs.row(s) = dirichlet_ones(m.num_actions, rng).transpose();
  return pi;
}

struct InstanceReport {
  int id = 0;
  int num_states = 0;
  int num_actions = 0;
  Lemma1Report lemma;
  TvOccupancyReport tv;
  PinskerReport pinsker;

  bool pass() const { return lemma.pass() && tv.pass && pinsker.pass; }
};

struct CertificationReport {
  std::uint64_t seed = 0;
  std::vector<InstanceReport> instances;

  bool pass() const {
    return std::all_of(instances.begin(), instances.end(), [](const InstanceReport& r) { return r.pass(); });
  }
  int failures() const {
    return static_cast<int>(std::count_if(instances.begin(), instances.end(), [](const InstanceReport& r) { return !r.pass(); }));
  }
};

inline CertificationReport certify(int count, std::uint64_t seed, double tolerance = 1e-9, const RandomMdpConfig& cfg = {}) {
  if (count < 1) throw ConfigError("certify: count must be >= 1");
  std::mt19937_64 rng(seed);
  CertificationReport rep;
  rep.seed = seed;
  for (int i = 0; i < count; ++i) {
    const TabularMdp m = random_mdp(rng, cfg);
    const TabularPolicy c = random_policy(m, rng);
    const TabularPolicy f = random_policy(m, rng);
    InstanceReport r;
    r.id = i;
    r.num_states = m.num_states;
    r.num_actions = m.num_actions;
    r.lemma = verify_lemma1(m, f, c, tolerance);
    r.tv = verify_tv_occupancy_bound(m, f, c, tolerance);
    r.pinsker = verify_pinsker(m, f, c, tolerance);
    rep.instances.push_back(r);
  }
  return rep;
}

/// CSV body, one row per instance. Doubles use round-trip precision.
inline void write_report_csv(std::ostream& os, const CertificationReport& rep) {
  os << "instance,states,actions,gamma,delta,max_kl,lhs,center,slack_lo,slack_hi,identity_error,tv_lhs,tv_rhs,"
        "pinsker_tv,pinsker_sqrt_kl,pass\n";
  os << std::setprecision(17);
  for (const auto& r : rep.instances) {
    os << r.id << ',' << r.num_states << ',' << r.num_actions << ',' << r.lemma.gamma << ',' << r.lemma.delta << ','
       << r.lemma.max_kl << ',' << r.lemma.lhs << ',' << r.lemma.center << ',' << r.lemma.slack_lo << ','
       << r.lemma.slack_hi << ',' << r.lemma.identity_error << ',' << r.tv.lhs << ',' << r.tv.rhs << ','
       << r.pinsker.expected_tv << ',' << r.pinsker.expected_sqrt_kl << ',' << (r.pass() ? 1 : 0) << '\n';
  }
}

}  // namespace gadc::bounds
