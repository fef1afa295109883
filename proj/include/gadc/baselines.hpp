#pragma once

// Comparison agents: weighted-sum scalarisation (MADDPG, GAT-MADDPG) and the
// sampled one-step search bound.

#include "gadc/gadc_agent.hpp"
#include "gadc/policy.hpp"
#include "gadc/swarm_env.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <unordered_set>
#include <vector>

namespace gadc::baselines {

struct WeightedRewardConfig {
  double phi = 0.5;

  void validate() const {
    if (!(phi > 0 && phi < 1)) throw std::invalid_argument("weighted reward: phi must be in (0,1)");
  }
};

inline double weighted_reward(double r_c, double r_f, double phi) { return phi * r_c + (1.0 - phi) * r_f; }
inline double weighted_reward(const env::RewardPair& r, double phi) { return weighted_reward(r.coverage, r.lifetime, phi); }

/// MADDPG on the raw local observation.
inline std::unique_ptr<agent::Learner> maddpg_agent(const env::Scenario& sc, const agent::TrainConfig& cfg, double phi) {
  return std::make_unique<agent::Learner>(sc, cfg,
                                          agent::LearnerSpec{agent::Features::kRaw, agent::Objective::kWeighted, phi});
}

/// MADDPG on the graph-attention features with memory.
inline std::unique_ptr<agent::Learner> gat_maddpg_agent(const env::Scenario& sc, const agent::TrainConfig& cfg,
                                                        double phi) {
  return std::make_unique<agent::Learner>(sc, cfg,
                                          agent::LearnerSpec{agent::Features::kGraph, agent::Objective::kWeighted, phi});
}

inline std::unique_ptr<agent::Learner> gadc_agent(const env::Scenario& sc, const agent::TrainConfig& cfg) {
  return std::make_unique<agent::Learner>(sc, cfg, agent::LearnerSpec{});
}

// ---------------------------------------------------------------------------
// One-step search

/// Number of joint actions 17^N, saturating at the maximum of uint64.
inline std::uint64_t joint_action_count(int num_uavs) {
  std::uint64_t c = 1;
  for (int i = 0; i < num_uavs; ++i) {
    if (c > std::numeric_limits<std::uint64_t>::max() / env::ActionSpace::kSize) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    c *= env::ActionSpace::kSize;
  }
  return c;
}

/// Mixed-radix decoding of joint action `code` (first UAV least significant).
inline std::vector<int> decode_joint_action(std::uint64_t code, int num_uavs) {
  std::vector<int> a(static_cast<std::size_t>(num_uavs));
  for (int& x : a) {
    x = static_cast<int>(code % env::ActionSpace::kSize);
    code /= env::ActionSpace::kSize;
  }
  return a;
}

/// One-step weighted reward of a joint action, evaluated on a copy of `world`.
inline double one_step_reward(const env::World& world, std::span<const int> actions, double phi) {
  env::World clone = world;
  return weighted_reward(clone.step(actions).reward, phi);
}

struct SearchResult {
  std::vector<int> actions;
  double reward = -std::numeric_limits<double>::infinity();
  std::uint64_t evaluated = 0;
};

/// Evaluates K distinct uniformly drawn joint actions (all of them when
/// K >= 17^N, each exactly once) and returns the best by one-step weighted
/// reward. Ties keep the first candidate evaluated.
inline SearchResult es_search(const env::World& world, std::uint64_t samples, double phi, std::mt19937_64& rng) {
  if (samples < 1) throw std::invalid_argument("es_search: need at least one sample");
  if (world.done()) throw std::logic_error("es_search: world already terminated");
  const int n = world.state().num_uavs();
  const std::uint64_t total = joint_action_count(n);
  SearchResult best;
  auto consider = [&](std::vector<int> a) {
    const double r = one_step_reward(world, a, phi);
    ++best.evaluated;
    if (r > best.reward) {
      best.reward = r;
      best.actions = std::move(a);
    }
  };
  if (total != std::numeric_limits<std::uint64_t>::max() && samples >= total) {
    for (std::uint64_t c = 0; c < total; ++c) consider(decode_joint_action(c, n));
    return best;
  }
  std::uniform_int_distribution<int> pick(0, env::ActionSpace::kSize - 1);
  if (n <= 15) {
    // 17^15 < 2^64: the joint code identifies the action exactly.
    std::unordered_set<std::uint64_t> seen;
    while (best.evaluated < samples) {
      std::uint64_t code = 0;
      std::vector<int> a(static_cast<std::size_t>(n));
      for (int i = n - 1; i >= 0; --i) {
        a[static_cast<std::size_t>(i)] = pick(rng);
        code = code * env::ActionSpace::kSize + static_cast<std::uint64_t>(a[static_cast<std::size_t>(i)]);
      }
      if (seen.insert(code).second) consider(std::move(a));
    }
    return best;
  }
  // Collisions are negligible beyond 17^15 joint actions.
  for (std::uint64_t k = 0; k < samples; ++k) {
    std::vector<int> a(static_cast<std::size_t>(n));
    for (int& x : a) x = pick(rng);
    consider(std::move(a));
  }
  return best;
}

/// Acts by one-step search at every slot.
class EsPolicy final : public Policy {
 public:
  EsPolicy(std::uint64_t samples, double phi, std::uint64_t seed) : samples_(samples), phi_(phi), rng_(seed) {}

  std::vector<int> act(const env::World& world, bool) override { return es_search(world, samples_, phi_, rng_).actions; }

 private:
  std::uint64_t samples_;
  double phi_;
  std::mt19937_64 rng_;
};

}  // namespace gadc::baselines
