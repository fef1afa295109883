#include "gadc/swarm_env.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace gadc::env;

namespace {

Scenario open_scenario() {
  Scenario sc;
  sc.world.map_side = 60;
  sc.world.num_uavs = 3;
  sc.world.num_uts = 5;
  sc.world.uav_height = 3;
  sc.world.connectivity_distance = 5;  // service radius 4
  return sc;
}

WorldState make_state(std::vector<Vec2> uavs, std::vector<Vec2> uts, double b = 100.0) {
  WorldState s;
  s.uav_pos = std::move(uavs);
  s.uav_energy.assign(s.uav_pos.size(), b);
  s.ut_pos = std::move(uts);
  return s;
}

}  // namespace

TEST(ServiceRadius, RightTriangle) { EXPECT_DOUBLE_EQ(service_radius(5, 3), 4.0); }
TEST(ServiceRadius, EqualHeightGivesZero) { EXPECT_DOUBLE_EQ(service_radius(7, 7), 0.0); }
TEST(ServiceRadius, SlantBelowHeightThrows) { EXPECT_THROW(service_radius(2, 3), std::domain_error); }
TEST(ServiceRadius, LargeMapPresetGivesTen) { EXPECT_DOUBLE_EQ(service_radius(26, 24), 10.0); }

TEST(Graph, SingleUavHasNoSelfLoop) {
  auto g = build_graph(make_state({{1, 1}}, {}), 5);
  EXPECT_EQ(g.size(), 1);
  EXPECT_FALSE(g.connected(0, 0));
  EXPECT_EQ(g.degree(0), 0);
}

TEST(Graph, BoundaryDistanceConnects) {
  auto g = build_graph(make_state({{0, 0}, {3, 4}}, {}), 5);
  EXPECT_TRUE(g.connected(0, 1));
  EXPECT_TRUE(g.connected(1, 0));
}

TEST(Graph, CollinearSpacingIsChain) {
  auto g = build_graph(make_state({{0, 0}, {5, 0}, {10, 0}}, {}), 5);
  EXPECT_TRUE(g.connected(0, 1));
  EXPECT_TRUE(g.connected(1, 2));
  EXPECT_FALSE(g.connected(0, 2));
}

TEST(Graph, MatchesPairwiseOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec2> pos(8);
    for (auto& p : pos) p = {u(rng), u(rng)};
    const auto g = build_graph(make_state(pos, {}), 9);
    EXPECT_EQ(g.edges(), oracle::graph_edges(pos, 9));
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) EXPECT_EQ(g.connected(a, b), g.connected(b, a));
  }
}

TEST(Visible, SamePointAndOutOfRange) {
  Scenario sc = open_scenario();
  EXPECT_TRUE(visible({2, 2}, {2, 2}, sc, 4));
  EXPECT_FALSE(visible({0, 0}, {4.01, 0}, sc, 4));
  EXPECT_TRUE(visible({0, 0}, {4, 0}, sc, 4));
}

TEST(Visible, ObstacleStraddlingSegmentBlocks) {
  Scenario sc = open_scenario();
  sc.channel.mode = ChannelMode::kObstacleOccluded;
  sc.world.obstacles.push_back({1, -1, 2, 1});
  EXPECT_FALSE(visible({0, 0}, {3, 0}, sc, 4));
  EXPECT_TRUE(visible({0, 2}, {3, 2}, sc, 4));
  sc.channel.mode = ChannelMode::kIdealDisk;
  EXPECT_TRUE(visible({0, 0}, {3, 0}, sc, 4));
}

TEST(Visible, SegmentRectangleMatchesSeparatingAxisOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 10);
  int hits = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    Vec2 p{u(rng), u(rng)}, q{u(rng), u(rng)};
    double x0 = u(rng), x1 = u(rng), y0 = u(rng), y1 = u(rng);
    Rect r{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
    const bool expect = oracle::segment_meets_rect(p, q, r);
    hits += expect;
    ASSERT_EQ(segment_intersects_rect(p, q, r), expect) << trial;
  }
  EXPECT_GT(hits, 1000);
}

TEST(Assign, NobodyInRange) {
  Scenario sc = open_scenario();
  auto s = make_state({{0, 0}}, {{30, 30}, {40, 40}});
  auto a = assign_uts(s, sc);
  EXPECT_EQ(a.total(), 0);
  for (int m : a.serving) EXPECT_EQ(m, -1);
}

TEST(Assign, OneUavCoversAll) {
  Scenario sc = open_scenario();
  auto s = make_state({{10, 10}, {50, 50}}, {{10, 11}, {11, 10}, {9, 9}});
  auto a = assign_uts(s, sc);
  EXPECT_EQ(a.counts, (std::vector<int>{3, 0}));
}

TEST(Assign, TieGoesToHigherEnergy) {
  Scenario sc = open_scenario();
  auto s = make_state({{10, 10}, {12, 10}}, {{11, 10}});
  s.uav_energy = {80, 90};
  EXPECT_EQ(assign_uts(s, sc).serving[0], 1);
  s.uav_energy = {90, 90};
  EXPECT_EQ(assign_uts(s, sc).serving[0], 0);
}

TEST(Assign, EachUtServedAtMostOnce) {
  Scenario sc = open_scenario();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 20);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> uavs(4), uts(30);
    for (auto& p : uavs) p = {u(rng), u(rng)};
    for (auto& p : uts) p = {u(rng), u(rng)};
    auto a = assign_uts(make_state(uavs, uts), sc);
    std::vector<int> counts(4, 0);
    for (int m : a.serving)
      if (m >= 0) ++counts[m];
    EXPECT_EQ(counts, a.counts);
  }
}

TEST(Actions, SeventeenWithHoverStill) {
  ActionSpace as;
  EXPECT_EQ(ActionSpace::kSize, 17);
  EXPECT_EQ(as.step_length(0), 0.0);
  EXPECT_EQ(as.step_length(3), 1.0);
  EXPECT_EQ(as.step_length(12), 2.0);
  EXPECT_NEAR(distance({0, 0}, as.displacement(10)), 2.0, 1e-15);
  EXPECT_THROW(as.step_length(17), std::out_of_range);
}

TEST(Step, HoverAloneCostsHoverOnly) {
  Scenario sc = open_scenario();
  auto s = make_state({{10, 10}}, {{50, 50}});
  const int a[] = {0};
  auto r = step(s, a, sc);
  EXPECT_DOUBLE_EQ(r.state.uav_energy[0], 99.0);
  EXPECT_EQ(r.reward.coverage, 0);
  EXPECT_DOUBLE_EQ(r.reward.lifetime, 99.0);
}

TEST(Step, FourTermConsumption) {
  Scenario sc = open_scenario();
  sc.energy.serve_power = 0.2;
  // UAV 0 moves 2 east to (12,10); neighbors at (14,10) and (12,13); three UTs next to it.
  auto s = make_state({{10, 10}, {14, 10}, {12, 13}}, {{12, 10.5}, {11.5, 10}, {12, 9.5}, {50, 50}});
  const int a[] = {9, 0, 0};
  auto r = step(s, a, sc);
  EXPECT_EQ(r.graph.degree(0), 2);
  EXPECT_EQ(r.assignment.counts[0], 3);
  EXPECT_NEAR(r.energy[0].total(), 1 + 0.2 + 1 + 0.6, 1e-12);
  EXPECT_NEAR(100 - r.state.uav_energy[0], 2.8, 1e-12);
}

TEST(Step, ClampedMoveChargesRealizedDistance) {
  Scenario sc = open_scenario();
  auto s = make_state({{59.5, 30}}, {{0, 0}});
  const int a[] = {9};  // long step east
  auto r = step(s, a, sc);
  EXPECT_DOUBLE_EQ(r.state.uav_pos[0].x, 60.0);
  EXPECT_DOUBLE_EQ(r.moved[0], 0.5);
  EXPECT_DOUBLE_EQ(r.energy[0].move, 0.25);
}

TEST(Step, RejectsBadInput) {
  Scenario sc = open_scenario();
  auto s = make_state({{1, 1}}, {{0, 0}});
  const int bad[] = {17};
  EXPECT_THROW(step(s, bad, sc), std::out_of_range);
  const int two[] = {0, 0};
  EXPECT_THROW(step(s, two, sc), std::invalid_argument);
  s.slot = sc.world.horizon;
  const int ok[] = {0};
  EXPECT_THROW(step(s, ok, sc), std::logic_error);
}

TEST(Step, TerminatesOnDepletionAndRecordsLifetime) {
  Scenario sc = open_scenario();
  sc.world.num_uavs = 1;
  sc.world.num_uts = 1;
  sc.world.horizon = 100;
  sc.energy.initial_battery = 3.5;
  World w(sc);
  w.reset(1);
  int slots = 0;
  const int a[] = {0};
  while (!w.done()) {
    auto r = w.step(a);
    ++slots;
    if (slots < 4) {
      EXPECT_FALSE(r.terminated);
    }
  }
  EXPECT_EQ(slots, 4);
  EXPECT_EQ(w.lifetime(), 4);
}

TEST(Step, HorizonTerminatesWithFullLifetime) {
  Scenario sc = open_scenario();
  sc.world.horizon = 5;
  World w(sc);
  w.reset(2);
  std::vector<int> a(3, 0);
  int slots = 0;
  while (!w.done()) {
    w.step(a);
    ++slots;
  }
  EXPECT_EQ(slots, 5);
  EXPECT_EQ(w.lifetime(), 5);
}

TEST(Step, EpisodeLedgerAndRewardBounds) {
  Scenario sc;  // desk defaults
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> act(0, 16);
  for (int ep = 0; ep < 20; ++ep) {
    World w(sc);
    w.reset(static_cast<std::uint64_t>(ep));
    std::vector<double> spent(sc.world.num_uavs, 0.0);
    double prev_rf = sc.energy.initial_battery;
    while (!w.done()) {
      std::vector<int> a(sc.world.num_uavs);
      for (int& x : a) x = act(rng);
      const WorldState before = w.state();
      auto r = w.step(a);
      const auto o = oracle::simulate_one_step(before, a, sc);
      EXPECT_NEAR(o.coverage, r.reward.coverage, 0.0);
      EXPECT_NEAR(o.min_energy, r.reward.lifetime, 1e-9);
      for (int n = 0; n < sc.world.num_uavs; ++n) spent[n] += r.energy[n].total();
      EXPECT_GE(r.reward.coverage, 0);
      EXPECT_LE(r.reward.coverage, sc.world.num_uts);
      EXPECT_LE(r.reward.lifetime, prev_rf);
      prev_rf = r.reward.lifetime;
    }
    for (int n = 0; n < sc.world.num_uavs; ++n)
      EXPECT_NEAR(sc.energy.initial_battery - w.state().uav_energy[n], spent[n], 1e-9);
  }
}

TEST(Reset, SeedDeterminesLayout) {
  Scenario sc;
  auto a = reset(sc, 42), b = reset(sc, 42);
  EXPECT_EQ(a.uav_pos, b.uav_pos);
  EXPECT_EQ(a.ut_pos, b.ut_pos);
  for (double e : a.uav_energy) EXPECT_EQ(e, sc.energy.initial_battery);
  std::set<std::pair<double, double>> firsts;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto st = reset(sc, s);
    firsts.insert({st.uav_pos[0].x, st.uav_pos[0].y});
  }
  EXPECT_EQ(firsts.size(), 100u);
}

TEST(Observation, IsolatedUavSeesOnlyItself) {
  Scenario sc = open_scenario();
  auto s = make_state({{30, 30}}, {{0, 0}});
  auto g = build_graph(s, sc.world.connectivity_distance);
  auto o = local_observation(s, 0, g, sc);
  ASSERT_EQ(o.size(), static_cast<std::size_t>(ObservationLayout::kSize));
  EXPECT_DOUBLE_EQ(o[0], 0.5);
  EXPECT_DOUBLE_EQ(o[1], 0.5);
  EXPECT_DOUBLE_EQ(o[2], 1.0);
  for (std::size_t i = 3; i < o.size(); ++i) EXPECT_EQ(o[i], 0.0);
}

TEST(Observation, UtAtObserveRadiusEdge) {
  Scenario sc = open_scenario();  // R_o = 6
  const double ro = sc.world.observation_radius();
  auto inside = make_state({{30, 30}}, {{30 + ro, 30}});
  auto outside = make_state({{30, 30}}, {{30 + ro + 1e-9, 30}});
  auto g = build_graph(inside, 5);
  auto a = local_observation(inside, 0, g, sc), b = local_observation(outside, 0, g, sc);
  int diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  EXPECT_EQ(diff, 1);
}

TEST(Observation, InvariantToFarAwayChanges) {
  Scenario sc = open_scenario();
  auto s = make_state({{10, 10}, {12, 10}, {50, 50}}, {{11, 11}, {40, 40}, {55, 5}});
  auto t = s;
  t.ut_pos[1] = {5, 55};
  t.ut_pos[2] = {45, 20};
  t.uav_pos[2] = {30, 50};
  t.uav_energy[2] = 3;
  auto gs = build_graph(s, 5), gt = build_graph(t, 5);
  EXPECT_EQ(local_observation(s, 0, gs, sc), local_observation(t, 0, gt, sc));
}

TEST(World, CloneDoesNotMutateOriginal) {
  Scenario sc;
  World w(sc);
  w.reset(3);
  World c = w;
  std::vector<int> a(sc.world.num_uavs, 9);
  c.step(a);
  EXPECT_EQ(w.state().slot, 0);
  EXPECT_EQ(c.state().slot, 1);
}

TEST(World, SameSeedAndActionsReproduceTrajectory) {
  Scenario sc;
  World a(sc), b(sc);
  a.reset(8);
  b.reset(8);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> act(0, 16);
  while (!a.done()) {
    std::vector<int> x(sc.world.num_uavs);
    for (int& v : x) v = act(rng);
    a.step(x);
    b.step(x);
    ASSERT_EQ(a.state().uav_pos, b.state().uav_pos);
    ASSERT_EQ(a.state().uav_energy, b.state().uav_energy);
  }
}

TEST(Config, ValidationRejectsBadWorlds) {
  WorldConfig w;
  w.connectivity_distance = 4;
  w.uav_height = 5;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  WorldConfig v;
  v.observe_radius = 1.0;
  EXPECT_THROW(v.validate(), std::invalid_argument);
  ChannelModel ch;
  ch.observe_power_threshold = 2;
  ch.service_power_threshold = 1;
  EXPECT_THROW(ch.validate(), std::invalid_argument);
}
