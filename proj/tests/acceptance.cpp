// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Optional arguments select a subset, e.g. `acceptance 1 5`.

#include "gadc/experiment.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

using namespace gadc;
using nn::Matrix;
using nn::Tape;
using nn::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

env::Graph random_graph(int n, double p, std::mt19937_64& rng) {
  env::Graph g(n);
  std::bernoulli_distribution coin(p);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (coin(rng)) g.connect(a, b);
  return g;
}

// --- 1 ------------------------------------------------------------------------

Outcome lemma_certification() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = bounds::certify(100, 2024);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst_slack = 1e300, worst_identity = 0.0;
  for (const auto& r : rep.instances) {
    worst_slack = std::min({worst_slack, r.lemma.slack_lo, r.lemma.slack_hi});
    worst_identity = std::max(worst_identity, r.lemma.identity_error);
  }
  return {rep.pass() && secs < 10.0, "100 instances, failures " + std::to_string(rep.failures()) + ", min slack " +
                                         fmt(worst_slack) + ", max identity error " + fmt(worst_identity)};
}

// --- 2 ------------------------------------------------------------------------

double check(const std::function<Var(Tape&)>& build, const nn::ParamList& ps, std::mt19937_64& rng) {
  // Nonzero biases keep rows off the ReLU kinks at exactly zero.
  for (auto* p : ps) p->value += 0.1 * random_matrix(p->value.rows(), p->value.cols(), rng);
  for (auto* p : ps) p->zero_grad();
  {
    Tape t;
    Var l = build(t);
    t.backward(l);
  }
  return oracle::gradient_error(
      [&] {
        Tape t;
        return build(t).scalar();
      },
      ps);
}

Outcome gradient_integrity() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> rows(2, 6), width(2, 7), heads(1, 3);
  double worst = 0.0;
  std::map<std::string, int> configs;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = rows(rng);
    const int raw = width(rng), hid = width(rng), h = heads(rng), embed = h * width(rng);
    auto hoods = std::make_shared<const gat::Neighborhoods>(gat::neighborhoods(random_graph(n, 0.5, rng)));
    nn::Parameter x("x", random_matrix(n, raw, rng));

    nn::Mlp enc({raw, hid, embed}, "enc", rng);
    {
      nn::ParamList ps;
      enc.collect(ps);
      ps.push_back(&x);
      const Matrix w = random_matrix(n, embed, rng);
      worst = std::max(worst, check([&](Tape& t) { return nn::sum(nn::mul(enc(t, t.param(x)), t.constant(w))); }, ps, rng));
      ++configs["encoder"];
    }

    gat::GatLayer l1(embed, embed / h, h, "g1", rng), l2(embed, embed / h, h, "g2", rng);
    {
      nn::Parameter mu("mu", random_matrix(n, embed, rng));
      nn::ParamList ps;
      l1.collect(ps);
      l2.collect(ps);
      ps.push_back(&mu);
      const Matrix w = random_matrix(n, embed, rng);
      worst = std::max(worst, check(
                                  [&](Tape& t) {
                                    Var g = l2(t, l1(t, t.param(mu), hoods), hoods);
                                    return nn::sum(nn::mul(g, t.constant(w)));
                                  },
                                  ps, rng));
      ++configs["gat"];
    }

    nn::GruCell gru(raw, hid, "gru", rng);
    {
      nn::Parameter hp("h", random_matrix(n, hid, rng));
      nn::ParamList ps;
      gru.collect(ps);
      ps.push_back(&x);
      ps.push_back(&hp);
      const Matrix w = random_matrix(n, hid, rng);
      worst = std::max(worst, check([&](Tape& t) { return nn::sum(nn::mul(gru(t, t.param(x), t.param(hp)), t.constant(w))); }, ps, rng));
      ++configs["gru"];
    }

    nn::Mlp actor({raw, hid, hid, agent::kNumActions}, "actor", rng);
    nn::Mlp critic_c({raw + agent::kNumActions, hid, hid, 1}, "critic_c", rng);
    nn::Mlp critic_f({raw, hid, hid, 1}, "critic_f", rng);
    {
      nn::ParamList ps;
      actor.collect(ps);
      // The coverage objective flows through the critic into the actor.
      worst = std::max(worst, check(
                                  [&](Tape& t) {
                                    Var p = agent::policy_probs(actor(t, t.constant(x.value)), 1e-8);
                                    return nn::mean(critic_c(t, nn::concat_cols({t.constant(x.value), p})));
                                  },
                                  ps, rng));
      ++configs["actor"];
    }
    {
      nn::ParamList ps;
      critic_c.collect(ps);
      const Matrix a = agent::policy_probs(random_matrix(n, agent::kNumActions, rng), 1e-8);
      const Matrix y = random_matrix(n, 1, rng);
      worst = std::max(worst, check(
                                  [&](Tape& t) {
                                    return nn::mse(critic_c(t, nn::concat_cols({t.param(x), t.constant(a)})), t.constant(y));
                                  },
                                  ps, rng));
      ++configs["critic_c"];
    }
    {
      nn::ParamList ps;
      critic_f.collect(ps);
      const Matrix y = random_matrix(n, 1, rng);
      worst = std::max(worst, check([&](Tape& t) { return nn::mse(critic_f(t, t.param(x)), t.constant(y)); }, ps, rng));
      ++configs["critic_f"];
    }
  }
  bool enough = configs.size() == 6;
  for (const auto& [k, v] : configs) enough = enough && v >= 10;
  return {enough && worst < 1e-4, "6 components x 10 configurations, max relative error " + fmt(worst)};
}

// --- 3 ------------------------------------------------------------------------

Outcome attention_correctness() {
  std::mt19937_64 rng(3);
  double row_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 7;
    const auto hoods = gat::neighborhoods(random_graph(n, 0.4, rng));
    const Matrix a = gat::attention_matrix(random_matrix(n, 4, rng, 3), random_matrix(n, 4, rng, 3), hoods);
    for (int r = 0; r < n; ++r) row_err = std::max(row_err, std::abs(a.row(r).sum() - 1.0));
  }

  gat::GatConfig cfg;
  cfg.raw_dim = 6;
  cfg.encoder_hidden = 8;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.gru_hidden = 5;
  cfg.output_dim = 4;
  double uniform_err = 0.0;
  bool locality = true;
  for (int trial = 0; trial < 20; ++trial) {
    gat::GatEncoder enc(cfg, rng);
    env::Graph star(5);
    for (int i = 1; i < 5; ++i) star.connect(0, i);
    const Matrix mu = Matrix::Ones(5, 1) * random_matrix(1, 8, rng);
    for (int j = 0; j < cfg.heads; ++j) {
      const auto w = gat::attention_weights(enc, 0, mu, star, j);
      for (double x : w) uniform_err = std::max(uniform_err, std::abs(x - 0.2));
    }

    env::Graph chain(4);
    chain.connect(0, 1);
    chain.connect(1, 2);
    chain.connect(2, 3);
    auto hoods = std::make_shared<const gat::Neighborhoods>(gat::neighborhoods(chain));
    const Matrix raw = random_matrix(4, 6, rng), h = random_matrix(4, 5, rng);
    auto trace = [&](const Matrix& r) {
      Tape t;
      auto tr = enc.forward(t, t.constant(r), hoods, t.constant(h));
      return std::make_tuple(Matrix(tr.layer1.value()), Matrix(tr.layer2.value()), Matrix(tr.output.value()));
    };
    auto [l1, l2, out] = trace(raw);
    Matrix two = raw, three = raw;
    two.row(2) = random_matrix(1, 6, rng);
    three.row(3) = random_matrix(1, 6, rng);
    auto [a1, a2, aout] = trace(two);
    auto [b1, b2, bout] = trace(three);
    locality = locality && l1.row(0) == a1.row(0) && l2.row(0) != a2.row(0) && out.row(0) != aout.row(0);
    locality = locality && l2.row(0) == b2.row(0) && out.row(0) == bout.row(0);
  }
  return {row_err <= 1e-9 && uniform_err <= 1e-9 && locality,
          "max |row sum - 1| " + fmt(row_err) + ", max uniform deviation " + fmt(uniform_err) + ", hop locality " +
              (locality ? "exact" : "violated")};
}

// --- 4 ------------------------------------------------------------------------

Outcome energy_ledger() {
  env::Scenario sc;
  sc.energy.initial_battery = 40.0;  // short enough that most episodes deplete
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> act(0, env::ActionSpace::kSize - 1);
  double worst = 0.0;
  int depleted = 0;
  bool termination_ok = true;
  for (int ep = 0; ep < 100; ++ep) {
    env::World w(sc);
    w.reset(static_cast<std::uint64_t>(ep) + 500);
    std::vector<double> spent(static_cast<std::size_t>(sc.world.num_uavs), 0.0);
    int first_depletion = -1;
    while (!w.done()) {
      std::vector<int> a(static_cast<std::size_t>(sc.world.num_uavs));
      for (int& x : a) x = act(rng);
      const env::WorldState before = w.state();
      const auto r = w.step(a);
      const auto o = oracle::simulate_one_step(before, a, sc);
      for (int n = 0; n < sc.world.num_uavs; ++n) {
        const auto& e = r.energy[static_cast<std::size_t>(n)];
        const auto& u = o.used[static_cast<std::size_t>(n)];
        worst = std::max({worst, std::abs(e.hover - u[0]), std::abs(e.comm - u[1]), std::abs(e.move - u[2]),
                          std::abs(e.serve - u[3])});
        spent[static_cast<std::size_t>(n)] += u[0] + u[1] + u[2] + u[3];
        worst = std::max(worst, std::abs(sc.energy.initial_battery - spent[static_cast<std::size_t>(n)] -
                                         w.state().uav_energy[static_cast<std::size_t>(n)]));
      }
      const bool any_empty = std::any_of(w.state().uav_energy.begin(), w.state().uav_energy.end(),
                                         [](double b) { return b <= 0; });
      if (any_empty && first_depletion < 0) first_depletion = w.state().slot;
      if (w.done() != (any_empty || w.state().slot == sc.world.horizon)) termination_ok = false;
    }
    if (first_depletion >= 0) {
      ++depleted;
      termination_ok = termination_ok && w.lifetime() == first_depletion && w.state().slot == first_depletion;
    } else {
      termination_ok = termination_ok && w.lifetime() == sc.world.horizon;
    }
  }
  return {worst <= 1e-9 && termination_ok && depleted > 0,
          "100 episodes (" + std::to_string(depleted) + " depleted), max ledger error " + fmt(worst) +
              ", termination " + (termination_ok ? "consistent" : "inconsistent")};
}

// --- 5 ------------------------------------------------------------------------

Outcome clip_semantics() {
  const double eps = 0.2;
  struct Case {
    double f, a, value, grad;
  };
  // value is the hand-computed min(F A, clip(F) A); grad is d value / d F.
  const std::vector<Case> cases = {
      {1.1, 2.0, 1.1 * 2.0, 2.0},     // inactive
      {0.9, -3.0, 0.9 * -3.0, -3.0},  // inactive
      {1.5, 1.0, 1.2 * 1.0, 0.0},     // positive advantage, saturated
      {2.0, 0.5, 1.2 * 0.5, 0.0},     // positive advantage, saturated
      {0.5, -1.0, 0.8 * -1.0, 0.0},   // negative advantage, clipped below
      {1.5, -1.0, 1.5 * -1.0, -1.0},  // negative advantage, pessimistic unclipped branch
      {0.5, 1.0, 0.5 * 1.0, 1.0},     // positive advantage below the band
  };
  bool exact = true;
  for (const auto& c : cases) {
    nn::Parameter f("f", Matrix::Constant(1, 1, c.f));
    Tape t;
    Var obj = agent::clipped_surrogate(t.param(f), Matrix::Constant(1, 1, c.a), eps);
    t.backward(obj);
    exact = exact && obj.scalar() == c.value && f.grad(0, 0) == c.grad;
  }
  // Batched: mean over rows of the per-row values.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.3, 1.7);
  double batch_err = 0.0;
  bool zero_where_bound = true;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix f(16, 1), a = random_matrix(16, 1, rng);
    for (int i = 0; i < 16; ++i) f(i, 0) = u(rng);
    nn::Parameter fp("f", f);
    Tape t;
    Var obj = agent::clipped_surrogate(t.param(fp), a, eps);
    t.backward(obj);
    double hand = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double unclipped = f(i, 0) * a(i, 0);
      const double clipped = std::clamp(f(i, 0), 1 - eps, 1 + eps) * a(i, 0);
      hand += std::min(unclipped, clipped);
      const bool binds = clipped < unclipped;
      if (binds && fp.grad(i, 0) != 0.0) zero_where_bound = false;
    }
    batch_err = std::max(batch_err, std::abs(obj.scalar() - hand / 16));
  }
  return {exact && zero_where_bound && batch_err <= 1e-15,
          std::string("hand cases ") + (exact ? "exact" : "mismatch") + ", batched max error " + fmt(batch_err) +
              ", zero gradient where clipping binds " + (zero_where_bound ? "yes" : "no")};
}

// --- 6 ------------------------------------------------------------------------

Outcome es_oracle() {
  env::Scenario sc;
  sc.world.num_uavs = 2;
  env::World w(sc);
  double worst = 0.0;
  bool counts = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    w.reset(9000 + s);
    std::mt19937_64 rng(s);
    const auto res = baselines::es_search(w, 17 * 17, 0.3, rng);
    counts = counts && res.evaluated == 289;
    worst = std::max(worst, std::abs(res.reward - oracle::best_one_step(w.state(), sc, 0.3)));
  }
  return {counts && worst <= 1e-12, "50 states, 289 distinct joint actions each, max gap " + fmt(worst)};
}

// --- 7, 8 -----------------------------------------------------------------------

std::string config_path() { return (fs::path(GADC_SOURCE_DIR) / "configs" / "desk.jsonc").string(); }

int workers() { return std::max(1u, std::thread::hardware_concurrency()); }

experiment::RunOutput run(const std::string& dir, std::vector<std::string> overrides, experiment::SweepAxis axis = {}) {
  experiment::ExperimentSpec spec;
  spec.config_path = config_path();
  spec.overrides = std::move(overrides);
  spec.sweep = std::move(axis);
  spec.output_dir = (fs::path("acceptance_runs") / dir).string();
  spec.workers = workers();
  spec.save_checkpoints = false;
  return experiment::run(spec);
}

Outcome dual_objective_dominance(double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto gadc = run("gadc", {"experiment.agent=gadc", "train.clip_epsilon=0.2"});
  const auto maddpg = run("maddpg", {"experiment.agent=maddpg"}, {"experiment.phi", {"0.2", "0.3", "0.4"}});
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // Best phi: highest mean coverage over seeds, ties to longer lifetime.
  const experiment::AggregateRow* best = nullptr;
  for (const auto& row : maddpg.summary) {
    if (!best || row.coverage_mean > best->coverage_mean ||
        (row.coverage_mean == best->coverage_mean && row.lifetime_mean > best->lifetime_mean)) {
      best = &row;
    }
  }
  int wins = 0;
  std::ostringstream per_seed;
  for (const auto& g : gadc.runs) {
    for (const auto& m : maddpg.runs) {
      if (m.sweep_value != best->sweep_value || m.seed != g.seed) continue;
      const bool win = g.eval.mean_coverage >= m.eval.mean_coverage && g.eval.mean_lifetime >= m.eval.mean_lifetime;
      wins += win;
      per_seed << " s" << g.seed << "[" << fmt(g.eval.mean_coverage) << "/" << fmt(g.eval.mean_lifetime) << " vs "
               << fmt(m.eval.mean_coverage) << "/" << fmt(m.eval.mean_lifetime) << "]";
    }
  }
  const bool in_budget = seconds < 30 * 60;
  return {wins >= 4 && in_budget, "best phi " + best->sweep_value + ", wins " + std::to_string(wins) + "/" +
                                      std::to_string(gadc.runs.size()) + per_seed.str() +
                                      (in_budget ? "" : ", over the 30 min budget")};
}

Outcome epsilon_tradeoff(double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run("epsilon", {"experiment.agent=gadc"}, {"train.clip_epsilon", {"0.1", "0.3"}});
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& lo = out.summary.at(0);
  const auto& hi = out.summary.at(1);
  const bool lifetime_ok = hi.lifetime_mean >= lo.lifetime_mean;
  const bool coverage_ok = hi.coverage_mean <= lo.coverage_mean;
  const bool in_budget = seconds < 45 * 60;
  return {lifetime_ok && coverage_ok && in_budget,
          "eps 0.1: coverage " + fmt(lo.coverage_mean) + " lifetime " + fmt(lo.lifetime_mean) + "; eps 0.3: coverage " +
              fmt(hi.coverage_mean) + " lifetime " + fmt(hi.lifetime_mean) + (in_budget ? "" : ", over the 45 min budget")};
}

// --- 9 ------------------------------------------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string(GADC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const fs::path root = fs::path("acceptance_runs") / "repro";
  fs::remove_all(root);
  const std::string train = "train -c " + config_path() + " --set experiment.episodes=5 --seeds 7 --workers 1 -o ";
  const std::string cert = "certify-bounds -n 100 --seed 7 --workers 1 -o ";
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    ok = ok && cli(train + (root / run).string()) == 0;
    ok = ok && cli(cert + (root / run / "certify.csv").string()) == 0;
  }
  int compared = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    const fs::path other = root / "b" / e.path().filename();
    ok = ok && fs::exists(other) && slurp(e.path()) == slurp(other);
  }
  return {ok && compared >= 4, std::to_string(compared) + " CSV files compared byte for byte"};
}

}  // namespace

int main(int argc, char** argv) {
  gadc::experiment::tune_allocator();
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  int failures = 0;
  auto report = [&](int k, const std::function<Outcome(double&)>& fn) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    double seconds = 0.0;
    Outcome o;
    try {
      o = fn(seconds);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (seconds == 0.0) seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("criterion %d: %s  (%s; %.1fs)\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds);
    std::fflush(stdout);
  };
  auto plain = [](Outcome (*fn)()) { return [fn](double&) { return fn(); }; };

  report(1, plain(lemma_certification));
  report(2, plain(gradient_integrity));
  report(3, plain(attention_correctness));
  report(4, plain(energy_ledger));
  report(5, plain(clip_semantics));
  report(6, plain(es_oracle));
  report(7, dual_objective_dominance);
  report(8, epsilon_tradeoff);
  report(9, plain(reproducibility));
  return failures == 0 ? 0 : 1;
}
