#pragma once

#include "gadc/swarm_env.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace gadc {

/// SplitMix64 finaliser, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-episode outcome. Learning fields are zero for non-learning agents.
struct EpisodeMetrics {
  int episode = 0;
  int slots = 0;
  int lifetime = 0;  // T_net: slots until the first depletion, or the horizon
  double sum_r_c = 0.0;
  double return_c = 0.0;  // discounted
  double return_f = 0.0;  // discounted
  double final_min_energy = 0.0;
  double mean_kl = 0.0;
  double actor_loss = 0.0;
  double critic_loss_c = 0.0;
  double critic_loss_f = 0.0;

  double mean_r_c() const { return slots > 0 ? sum_r_c / slots : 0.0; }
};

/// Anything that maps a world to a joint action.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(const env::World&) {}
  virtual std::vector<int> act(const env::World& world, bool explore) = 0;
};

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}

  std::vector<int> act(const env::World& world, bool) override {
    std::uniform_int_distribution<int> pick(0, env::ActionSpace::kSize - 1);
    std::vector<int> a(static_cast<std::size_t>(world.state().num_uavs()));
    for (int& x : a) x = pick(rng_);
    return a;
  }

 private:
  std::mt19937_64 rng_;
};

/// Plays one episode without learning.
inline EpisodeMetrics rollout(Policy& policy, env::World& world, std::uint64_t world_seed, bool explore, double gamma,
                              int episode = 0) {
  world.reset(world_seed);
  policy.begin_episode(world);
  EpisodeMetrics m;
  m.episode = episode;
  double disc = 1.0;
  while (!world.done()) {
    const auto actions = policy.act(world, explore);
    const auto r = world.step(actions);
    m.sum_r_c += r.reward.coverage;
    m.return_c += disc * r.reward.coverage;
    m.return_f += disc * r.reward.lifetime;
    disc *= gamma;
    ++m.slots;
    m.final_min_energy = r.reward.lifetime;
  }
  m.lifetime = world.lifetime();
  return m;
}

/// Seed of evaluation episode `i` for a run seeded with `seed`; disjoint from
/// the training-episode stream.
inline std::uint64_t eval_episode_seed(std::uint64_t seed, int i) { return mix_seed(seed ^ 0xe7a1e7a1ULL, static_cast<std::uint64_t>(i) + (1ULL << 40)); }
inline std::uint64_t train_episode_seed(std::uint64_t seed, int i) { return mix_seed(seed, static_cast<std::uint64_t>(i)); }

inline std::vector<EpisodeMetrics> evaluate(Policy& policy, const env::Scenario& sc, int episodes, std::uint64_t seed,
                                            double gamma, bool explore = false) {
  env::World world(sc);
  std::vector<EpisodeMetrics> out;
  for (int i = 0; i < episodes; ++i) out.push_back(rollout(policy, world, eval_episode_seed(seed, i), explore, gamma, i));
  return out;
}

struct Summary {
  double mean_coverage = 0.0;  // mean served UTs per slot
  double mean_lifetime = 0.0;
  double mean_sum_r_c = 0.0;
  double std_coverage = 0.0;
  double std_lifetime = 0.0;
  int episodes = 0;
};

inline Summary summarize(const std::vector<EpisodeMetrics>& ms) {
  Summary s;
  s.episodes = static_cast<int>(ms.size());
  if (ms.empty()) return s;
  for (const auto& m : ms) {
    s.mean_coverage += m.mean_r_c();
    s.mean_lifetime += m.lifetime;
    s.mean_sum_r_c += m.sum_r_c;
  }
  const double n = static_cast<double>(ms.size());
  s.mean_coverage /= n;
  s.mean_lifetime /= n;
  s.mean_sum_r_c /= n;
  for (const auto& m : ms) {
    s.std_coverage += (m.mean_r_c() - s.mean_coverage) * (m.mean_r_c() - s.mean_coverage);
    s.std_lifetime += (m.lifetime - s.mean_lifetime) * (m.lifetime - s.mean_lifetime);
  }
  s.std_coverage = std::sqrt(s.std_coverage / n);
  s.std_lifetime = std::sqrt(s.std_lifetime / n);
  return s;
}

}  // namespace gadc
