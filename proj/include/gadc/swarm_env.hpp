#pragma once

// Discrete-time multi-UAV coverage world: geometry, connectivity, UT
// assignment, the four-term energy ledger and local observations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gadc::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned rectangle on the ground plane. Closed: touching the boundary
/// counts as intersecting.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class ChannelMode { kIdealDisk, kObstacleOccluded };

struct ChannelModel {
  ChannelMode mode = ChannelMode::kIdealDisk;
  double observe_power_threshold = 0.0;
  double service_power_threshold = 0.0;

  void validate() const {
    if (service_power_threshold < observe_power_threshold) {
      throw std::invalid_argument("channel: service threshold must be >= observe threshold");
    }
  }
};

struct EnergyModel {
  double move_coeff = 0.5;          // kappa, energy per unit of horizontal travel
  double hover_cost = 1.0;          // chi_h, per slot
  double serve_power = 0.2;         // p_s, per served UT per unit time
  double neighbor_comm_cost = 0.1;  // rho, per neighbor link per slot
  double initial_battery = 100.0;   // b_0

  void validate() const {
    if (move_coeff < 0 || hover_cost < 0 || serve_power < 0 || neighbor_comm_cost < 0) {
      throw std::invalid_argument("energy: coefficients must be non-negative");
    }
    if (!(initial_battery > 0)) throw std::invalid_argument("energy: initial battery must be positive");
  }
};

/// Maximum horizontal service radius for a UAV at height `height` whose
/// slant service range is `slant_range`.
inline double service_radius(double slant_range, double height) {
  if (height < 0) throw std::domain_error("service_radius: negative height");
  if (slant_range < height) throw std::domain_error("service_radius: slant range below UAV height");
  return std::sqrt(slant_range * slant_range - height * height);
}

struct WorldConfig {
  double map_side = 60.0;
  int num_uavs = 5;
  int num_uts = 20;
  int horizon = 60;
  double slot_duration = 1.0;
  double uav_height = 5.0;
  double connectivity_distance = 13.0;
  /// Unset means 1.5 x service radius.
  std::optional<double> observe_radius;
  std::uint64_t seed = 1;
  std::vector<Rect> obstacles;

  double service_radius() const { return env::service_radius(connectivity_distance, uav_height); }
  double observation_radius() const { return observe_radius.value_or(1.5 * service_radius()); }

  void validate() const {
    if (!(map_side > 0)) throw std::invalid_argument("world: map_side must be positive");
    if (num_uavs < 1) throw std::invalid_argument("world: need at least one UAV");
    if (num_uts < 1) throw std::invalid_argument("world: need at least one UT");
    if (horizon < 1) throw std::invalid_argument("world: horizon must be >= 1");
    if (!(slot_duration > 0)) throw std::invalid_argument("world: slot_duration must be positive");
    if (uav_height < 0 || !(connectivity_distance > uav_height)) {
      throw std::invalid_argument("world: need connectivity_distance > uav_height >= 0");
    }
    if (observation_radius() < service_radius()) {
      throw std::invalid_argument("world: observe radius must be >= service radius");
    }
    for (const auto& r : obstacles) {
      if (!(r.x_max >= r.x_min && r.y_max >= r.y_min)) throw std::invalid_argument("world: malformed obstacle");
    }
  }
};

/// 17 discrete moves: hover, then 8 headings at the short step, then the same
/// 8 headings at the long step. Heading k points at angle k * 45 degrees.
struct ActionSpace {
  static constexpr int kSize = 17;
  static constexpr int kHover = 0;

  double short_step = 1.0;
  double long_step = 2.0;

  static bool valid(int action) { return action >= 0 && action < kSize; }

  double step_length(int action) const {
    if (!valid(action)) throw std::out_of_range("action index outside [0,16]: " + std::to_string(action));
    if (action == kHover) return 0.0;
    return action <= 8 ? short_step : long_step;
  }

  Vec2 displacement(int action) const {
    const double len = step_length(action);
    if (action == kHover) return {};
    static constexpr double kD = 0.70710678118654752440;
    static constexpr std::array<Vec2, 8> kUnit{{{1, 0}, {kD, kD}, {0, 1}, {-kD, kD},
                                                {-1, 0}, {-kD, -kD}, {0, -1}, {kD, -kD}}};
    const Vec2 u = kUnit[static_cast<std::size_t>((action - 1) % 8)];
    return {len * u.x, len * u.y};
  }
};

/// Everything needed to simulate: geometry, channel, energy and moves.
struct Scenario {
  WorldConfig world;
  EnergyModel energy;
  ChannelModel channel;
  ActionSpace actions;

  void validate() const {
    world.validate();
    energy.validate();
    channel.validate();
    if (actions.short_step < 0 || actions.long_step < 0) throw std::invalid_argument("actions: negative step");
  }
};

struct WorldState {
  std::vector<Vec2> uav_pos;
  std::vector<double> uav_energy;
  std::vector<Vec2> ut_pos;
  int slot = 0;

  int num_uavs() const { return static_cast<int>(uav_pos.size()); }
  int num_uts() const { return static_cast<int>(ut_pos.size()); }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Undirected UAV connectivity graph.
class Graph {
 public:
  Graph() = default;
  explicit Graph(int n) : n_(n), adj_(static_cast<std::size_t>(n) * n, 0), neighbors_(n) {}

  int size() const { return n_; }
  bool connected(int a, int b) const { return adj_[static_cast<std::size_t>(a) * n_ + b] != 0; }
  const std::vector<int>& neighbors(int n) const { return neighbors_[n]; }
  int degree(int n) const { return static_cast<int>(neighbors_[n].size()); }

  void connect(int a, int b) {
    if (a == b || connected(a, b)) return;
    adj_[static_cast<std::size_t>(a) * n_ + b] = 1;
    adj_[static_cast<std::size_t>(b) * n_ + a] = 1;
    neighbors_[a].push_back(b);
    neighbors_[b].push_back(a);
    std::sort(neighbors_[a].begin(), neighbors_[a].end());
    std::sort(neighbors_[b].begin(), neighbors_[b].end());
  }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < n_; ++a)
      for (int b : neighbors_[a])
        if (a < b) out.emplace_back(a, b);
    return out;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> adj_;
  std::vector<std::vector<int>> neighbors_;
};

inline Graph build_graph(const WorldState& state, double link_distance) {
  const int n = state.num_uavs();
  Graph g(n);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (distance(state.uav_pos[a], state.uav_pos[b]) <= link_distance) g.connect(a, b);
  return g;
}

/// Liang-Barsky clip of segment [p, q] against a closed rectangle.
inline bool segment_intersects_rect(Vec2 p, Vec2 q, const Rect& r) {
  double t0 = 0.0, t1 = 1.0;
  const double dx = q.x - p.x, dy = q.y - p.y;
  const std::array<double, 4> num{p.x - r.x_min, r.x_max - p.x, p.y - r.y_min, r.y_max - p.y};
  const std::array<double, 4> den{-dx, dx, -dy, dy};
  for (int i = 0; i < 4; ++i) {
    if (den[i] == 0.0) {
      if (num[i] < 0.0) return false;
      continue;
    }
    const double t = num[i] / den[i];
    if (den[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return false;
  }
  return true;
}

/// Whether a UT at `ut` is reachable from a UAV above `uav` within the given
/// horizontal radius. Occluded mode also requires a clear ground-projected path.
inline bool visible(Vec2 uav, Vec2 ut, const Scenario& sc, double radius) {
  if (distance(uav, ut) > radius) return false;
  if (sc.channel.mode == ChannelMode::kIdealDisk) return true;
  return std::none_of(sc.world.obstacles.begin(), sc.world.obstacles.end(),
                      [&](const Rect& r) { return segment_intersects_rect(uav, ut, r); });
}

/// UT-to-UAV service assignment. `serving[m]` is -1 for isolated UTs.
struct Assignment {
  std::vector<int> serving;
  std::vector<int> counts;

  bool omega(int ut, int uav) const { return serving[ut] == uav; }
  int total() const { return std::accumulate(counts.begin(), counts.end(), 0); }
};

/// Nearest visible UAV within the service radius; ties go to the UAV with
/// more residual energy, then the lower index.
inline Assignment assign_uts(const WorldState& state, const Scenario& sc) {
  const double rs = sc.world.service_radius();
  Assignment a;
  a.serving.assign(state.ut_pos.size(), -1);
  a.counts.assign(state.uav_pos.size(), 0);
  for (int m = 0; m < state.num_uts(); ++m) {
    int best = -1;
    double best_d = 0.0;
    for (int n = 0; n < state.num_uavs(); ++n) {
      if (!visible(state.uav_pos[n], state.ut_pos[m], sc, rs)) continue;
      const double d = distance(state.uav_pos[n], state.ut_pos[m]);
      if (best < 0 || d < best_d || (d == best_d && state.uav_energy[n] > state.uav_energy[best])) {
        best = n;
        best_d = d;
      }
    }
    a.serving[m] = best;
    if (best >= 0) ++a.counts[best];
  }
  return a;
}

struct RewardPair {
  double coverage = 0.0;  // r^c: UTs served this slot
  double lifetime = 0.0;  // r^f: minimum residual energy
};

/// Per-UAV consumption in one slot, split by cause.
struct EnergyBreakdown {
  double hover = 0.0;
  double comm = 0.0;
  double move = 0.0;
  double serve = 0.0;

  double total() const { return hover + comm + move + serve; }
};

struct StepResult {
  WorldState state;
  RewardPair reward;
  bool terminated = false;
  bool depleted = false;
  Graph graph;
  Assignment assignment;
  std::vector<EnergyBreakdown> energy;
  std::vector<double> moved;  // realized horizontal displacement per UAV
};

inline StepResult step(const WorldState& state, std::span<const int> actions, const Scenario& sc) {
  const int n = state.num_uavs();
  if (static_cast<int>(actions.size()) != n) throw std::invalid_argument("step: one action per UAV required");
  for (int a : actions)
    if (!ActionSpace::valid(a)) throw std::out_of_range("action index outside [0,16]: " + std::to_string(a));
  if (state.slot >= sc.world.horizon) throw std::logic_error("step: episode horizon already reached");
  if (std::any_of(state.uav_energy.begin(), state.uav_energy.end(), [](double b) { return b <= 0; })) {
    throw std::logic_error("step: a UAV is already depleted");
  }

  StepResult out;
  out.state = state;
  out.moved.assign(n, 0.0);
  const double side = sc.world.map_side;
  for (int i = 0; i < n; ++i) {
    const Vec2 d = sc.actions.displacement(actions[i]);
    const Vec2 from = state.uav_pos[i];
    const Vec2 to{std::clamp(from.x + d.x, 0.0, side), std::clamp(from.y + d.y, 0.0, side)};
    out.state.uav_pos[i] = to;
    out.moved[i] = distance(from, to);
  }

  out.graph = build_graph(out.state, sc.world.connectivity_distance);
  out.assignment = assign_uts(out.state, sc);

  const auto& e = sc.energy;
  out.energy.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& b = out.energy[i];
    b.hover = e.hover_cost;
    b.comm = out.graph.degree(i) * e.neighbor_comm_cost;
    b.move = e.move_coeff * out.moved[i];
    b.serve = sc.world.slot_duration * out.assignment.counts[i] * e.serve_power;
    out.state.uav_energy[i] -= b.total();
  }
  out.state.slot = state.slot + 1;

  out.reward.coverage = out.assignment.total();
  out.reward.lifetime = *std::min_element(out.state.uav_energy.begin(), out.state.uav_energy.end());
  out.depleted = out.reward.lifetime <= 0.0;
  out.terminated = out.depleted || out.state.slot == sc.world.horizon;
  return out;
}

inline WorldState reset(const Scenario& sc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, sc.world.map_side);
  WorldState s;
  s.uav_pos.resize(sc.world.num_uavs);
  s.ut_pos.resize(sc.world.num_uts);
  for (auto& p : s.uav_pos) p = {coord(rng), coord(rng)};
  for (auto& p : s.ut_pos) p = {coord(rng), coord(rng)};
  s.uav_energy.assign(sc.world.num_uavs, sc.energy.initial_battery);
  s.slot = 0;
  return s;
}

/// Fixed-size local observation layout.
struct ObservationLayout {
  static constexpr int kOwn = 3;  // x/E, y/E, b/b0
  static constexpr int kGridSide = 8;
  static constexpr int kGridCells = kGridSide * kGridSide;
  static constexpr int kMaxNeighbors = 6;
  static constexpr int kNeighborFeatures = 3;  // dx/D_s, dy/D_s, b/b0
  static constexpr int kGridOffset = kOwn;
  static constexpr int kNeighborOffset = kOwn + kGridCells;
  static constexpr int kSize = kNeighborOffset + kMaxNeighbors * kNeighborFeatures;
};

using RawObservation = std::vector<double>;

/// What UAV `n` perceives: its own state, an occupancy count grid of the UTs
/// it can observe (the R_o disk split into 8x8 cells) and its nearest linked
/// neighbors.
inline RawObservation local_observation(const WorldState& state, int n, const Graph& graph, const Scenario& sc) {
  using L = ObservationLayout;
  if (n < 0 || n >= state.num_uavs()) throw std::out_of_range("local_observation: UAV index");
  RawObservation obs(L::kSize, 0.0);
  const Vec2 p = state.uav_pos[n];
  const double b0 = sc.energy.initial_battery;
  obs[0] = p.x / sc.world.map_side;
  obs[1] = p.y / sc.world.map_side;
  obs[2] = state.uav_energy[n] / b0;

  const double ro = sc.world.observation_radius();
  const double cell = 2.0 * ro / L::kGridSide;
  for (const Vec2& u : state.ut_pos) {
    if (!visible(p, u, sc, ro)) continue;
    const int col = std::clamp(static_cast<int>(std::floor((u.x - p.x + ro) / cell)), 0, L::kGridSide - 1);
    const int row = std::clamp(static_cast<int>(std::floor((u.y - p.y + ro) / cell)), 0, L::kGridSide - 1);
    obs[L::kGridOffset + row * L::kGridSide + col] += 1.0;
  }

  std::vector<int> nbrs = graph.neighbors(n);
  std::stable_sort(nbrs.begin(), nbrs.end(), [&](int a, int b) {
    return distance(p, state.uav_pos[a]) < distance(p, state.uav_pos[b]);
  });
  const double ds = sc.world.connectivity_distance;
  const int k = std::min<int>(static_cast<int>(nbrs.size()), L::kMaxNeighbors);
  for (int j = 0; j < k; ++j) {
    const int i = nbrs[j];
    const int base = L::kNeighborOffset + j * L::kNeighborFeatures;
    obs[base] = (state.uav_pos[i].x - p.x) / ds;
    obs[base + 1] = (state.uav_pos[i].y - p.y) / ds;
    obs[base + 2] = state.uav_energy[i] / b0;
  }
  return obs;
}

/// A world instance: scenario plus the evolving state and episode bookkeeping.
/// Copyable, so it can be cloned for look-ahead evaluation.
class World {
 public:
  World() = default;
  explicit World(Scenario sc) : sc_(std::move(sc)) { sc_.validate(); }

  const Scenario& scenario() const { return sc_; }
  const WorldState& state() const { return state_; }
  bool done() const { return done_; }
  int lifetime() const { return lifetime_; }

  void reset(std::uint64_t seed) {
    state_ = env::reset(sc_, seed);
    graph_ = build_graph(state_, sc_.world.connectivity_distance);
    done_ = false;
    lifetime_ = sc_.world.horizon;
  }

  /// Forces a specific state (tests, look-ahead search).
  void set_state(WorldState s) {
    state_ = std::move(s);
    graph_ = build_graph(state_, sc_.world.connectivity_distance);
    done_ = false;
    lifetime_ = sc_.world.horizon;
  }

  const Graph& graph() const { return graph_; }

  RawObservation observe(int n) const { return local_observation(state_, n, graph_, sc_); }

  /// All observations, row-major N x ObservationLayout::kSize.
  std::vector<double> observe_all() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(state_.num_uavs()) * ObservationLayout::kSize);
    for (int n = 0; n < state_.num_uavs(); ++n) {
      auto o = observe(n);
      out.insert(out.end(), o.begin(), o.end());
    }
    return out;
  }

  StepResult step(std::span<const int> actions) {
    if (done_) throw std::logic_error("World::step after termination");
    StepResult r = env::step(state_, actions, sc_);
    state_ = r.state;
    graph_ = r.graph;
    done_ = r.terminated;
    if (r.depleted) lifetime_ = state_.slot;
    return r;
  }

 private:
  Scenario sc_;
  WorldState state_;
  Graph graph_;
  bool done_ = true;
  int lifetime_ = 0;
};

}  // namespace gadc::env
