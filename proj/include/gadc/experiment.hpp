#pragma once

// Run orchestration: train/evaluate one configuration per seed, sweep a
// config key over a list of values, persist metrics and checkpoints.
//
// Jobs are independent and seeded on their own, so any worker count gives
// the same files.

#include "gadc/baselines.hpp"
#include "gadc/bound_lab.hpp"
#include "gadc/errors.hpp"
#include "gadc/gadc_agent.hpp"
#include "gadc/io.hpp"
#include "gadc/nn/checkpoint.hpp"
#include "gadc/policy.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gadc::experiment {

namespace fs = std::filesystem;

/// Keeps large training temporaries on the heap instead of fresh mappings.
/// Process-wide; call once from main.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

struct SweepAxis {
  std::string key;  // dotted config key, e.g. train.clip_epsilon
  std::vector<std::string> values;

  bool empty() const { return key.empty(); }
};

struct ExperimentSpec {
  std::string config_path;
  std::vector<std::string> overrides;
  SweepAxis sweep;
  std::vector<std::uint64_t> seeds;  // empty means the config's list
  std::string output_dir = "runs";
  int workers = 1;
  bool save_checkpoints = true;
};

struct RunResult {
  std::string agent;
  std::string sweep_value;
  std::uint64_t seed = 0;
  std::vector<EpisodeMetrics> training;
  Summary eval;
  std::string metrics_path;
  std::string checkpoint_path;
};

inline std::unique_ptr<agent::Learner> make_learner(const io::RunConfig& c, std::uint64_t seed) {
  agent::TrainConfig t = c.train;
  t.seed = seed;
  switch (c.agent) {
    case io::AgentKind::kGadc: return baselines::gadc_agent(c.scenario, t);
    case io::AgentKind::kMaddpg: return baselines::maddpg_agent(c.scenario, t, c.phi);
    case io::AgentKind::kGatMaddpg: return baselines::gat_maddpg_agent(c.scenario, t, c.phi);
    default: return nullptr;
  }
}

/// Trains (learning agents only), then evaluates greedily on the fixed
/// evaluation episodes of `seed`.
struct TrainedRun {
  std::vector<EpisodeMetrics> training;
  std::vector<EpisodeMetrics> evaluation;
  std::unique_ptr<agent::Learner> learner;
};

inline TrainedRun train_and_evaluate(const io::RunConfig& c, std::uint64_t seed) {
  TrainedRun out;
  const double gamma = c.train.gamma;
  if (auto learner = make_learner(c, seed)) {
    out.training = learner->train(c.episodes);
    out.evaluation = evaluate(*learner, c.scenario, c.eval_episodes, seed, gamma, false);
    out.learner = std::move(learner);
  } else if (c.agent == io::AgentKind::kEs) {
    baselines::EsPolicy p(c.es_samples, c.phi, mix_seed(seed, 0xe5));
    out.evaluation = evaluate(p, c.scenario, c.eval_episodes, seed, gamma, false);
  } else {
    RandomPolicy p(mix_seed(seed, 0x7a));
    out.evaluation = evaluate(p, c.scenario, c.eval_episodes, seed, gamma, true);
  }
  return out;
}

inline std::string sanitize(std::string s) {
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-')) ch = '_';
  return s;
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory: " + dir);
}

struct Job {
  io::RunConfig config;
  std::string sweep_value;
  std::uint64_t seed = 0;
};

inline RunResult run_job(const Job& job, const ExperimentSpec& spec) {
  RunResult r;
  r.agent = io::to_string(job.config.agent);
  r.sweep_value = job.sweep_value;
  r.seed = job.seed;
  TrainedRun tr = train_and_evaluate(job.config, job.seed);
  r.training = std::move(tr.training);
  r.eval = summarize(tr.evaluation);

  std::string stem = r.agent;
  if (!spec.sweep.empty()) stem += "_" + sanitize(spec.sweep.key) + "-" + sanitize(job.sweep_value);
  stem += "_seed" + std::to_string(job.seed);
  std::vector<std::pair<std::string, std::string>> extra;
  if (!spec.sweep.empty()) extra.emplace_back("sweep." + spec.sweep.key, job.sweep_value);

  r.metrics_path = (fs::path(spec.output_dir) / (stem + ".csv")).string();
  {
    auto os = io::open_output(r.metrics_path);
    io::write_header(os, job.config, job.seed, extra);
    io::write_metrics(os, r.training);
  }
  const std::string eval_path = (fs::path(spec.output_dir) / (stem + "_eval.csv")).string();
  {
    auto os = io::open_output(eval_path);
    io::write_header(os, job.config, job.seed, extra);
    io::write_metrics(os, tr.evaluation);
  }
  if (tr.learner && spec.save_checkpoints) {
    r.checkpoint_path = (fs::path(spec.output_dir) / (stem + ".ckpt")).string();
    nn::Checkpoint ck = tr.learner->checkpoint();
    ck.meta["seed"] = std::to_string(job.seed);
    nn::save_checkpoint(r.checkpoint_path, ck);
  }
  return r;
}

/// Runs jobs on `workers` threads; results keep job order.
inline std::vector<RunResult> run_jobs(const std::vector<Job>& jobs, const ExperimentSpec& spec) {
  std::vector<RunResult> results(jobs.size());
  const int workers = std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = run_job(jobs[i], spec);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          results[i] = run_job(jobs[i], spec);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

struct AggregateRow {
  std::string sweep_value;
  int seeds = 0;
  double coverage_mean = 0.0, coverage_std = 0.0;
  double lifetime_mean = 0.0, lifetime_std = 0.0;
};

inline std::vector<AggregateRow> aggregate(const std::vector<RunResult>& results) {
  std::vector<AggregateRow> rows;
  for (const auto& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) { return a.sweep_value == r.sweep_value; });
    if (it == rows.end()) {
      rows.push_back({r.sweep_value});
      it = rows.end() - 1;
    }
    ++it->seeds;
    it->coverage_mean += r.eval.mean_coverage;
    it->lifetime_mean += r.eval.mean_lifetime;
  }
  for (auto& a : rows) {
    a.coverage_mean /= a.seeds;
    a.lifetime_mean /= a.seeds;
    for (const auto& r : results) {
      if (r.sweep_value != a.sweep_value) continue;
      a.coverage_std += (r.eval.mean_coverage - a.coverage_mean) * (r.eval.mean_coverage - a.coverage_mean);
      a.lifetime_std += (r.eval.mean_lifetime - a.lifetime_mean) * (r.eval.mean_lifetime - a.lifetime_mean);
    }
    a.coverage_std = std::sqrt(a.coverage_std / a.seeds);
    a.lifetime_std = std::sqrt(a.lifetime_std / a.seeds);
  }
  return rows;
}

struct RunOutput {
  std::vector<RunResult> runs;
  std::vector<AggregateRow> summary;
  std::string summary_path;
};

/// Executes every (sweep value, seed) pair and writes one metrics CSV each
/// plus summary.csv with mean and standard deviation per sweep value.
inline RunOutput run(const ExperimentSpec& spec) {
  io::Json base = spec.config_path.empty() ? io::Json::object() : io::load_json(spec.config_path);
  io::apply_overrides(base, spec.overrides);
  const io::RunConfig resolved = io::from_json(base);
  const std::vector<std::uint64_t> seeds = spec.seeds.empty() ? resolved.seeds : spec.seeds;
  if (seeds.empty()) throw ConfigError("no seeds given");
  if (!spec.sweep.empty() && spec.sweep.values.empty()) throw ConfigError("sweep axis has no values");

  std::vector<Job> jobs;
  const std::vector<std::string> values = spec.sweep.empty() ? std::vector<std::string>{""} : spec.sweep.values;
  for (const auto& v : values) {
    io::Json j = base;
    if (!spec.sweep.empty()) io::set_path(j, spec.sweep.key, io::parse_value(v));
    io::RunConfig c = io::from_json(j);
    c.seeds = seeds;
    for (auto s : seeds) jobs.push_back({c, v, s});
  }
  ensure_dir(spec.output_dir);

  RunOutput out;
  out.runs = run_jobs(jobs, spec);
  out.summary = aggregate(out.runs);
  out.summary_path = (fs::path(spec.output_dir) / "summary.csv").string();
  auto os = io::open_output(out.summary_path);
  io::RunConfig header_cfg = resolved;
  header_cfg.seeds = seeds;
  std::vector<std::pair<std::string, std::string>> extra;
  if (!spec.sweep.empty()) extra.emplace_back("sweep.key", spec.sweep.key);
  io::write_header(os, header_cfg, seeds.front(), extra);
  os << "sweep_value,seeds,coverage_mean,coverage_std,lifetime_mean,lifetime_std\n";
  for (const auto& a : out.summary) {
    os << a.sweep_value << ',' << a.seeds << ',' << a.coverage_mean << ',' << a.coverage_std << ',' << a.lifetime_mean
       << ',' << a.lifetime_std << '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation

/// Builds a learner whose architecture matches the checkpoint, for the
/// scenario of `c` (which may differ in N and M from training).
inline std::unique_ptr<agent::Learner> learner_from_checkpoint(const nn::Checkpoint& ck, const io::RunConfig& c,
                                                               std::uint64_t seed) {
  auto meta = [&](const char* key) -> std::string {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw VersionError(std::string("checkpoint: missing metadata ") + key);
    return it->second;
  };
  io::RunConfig rc = c;
  try {
    rc.agent = io::parse_agent(meta("agent"));
    rc.train.hidden = std::stoi(meta("hidden"));
    rc.train.gat.encoder_hidden = std::stoi(meta("gat.encoder_hidden"));
    rc.train.gat.embed_dim = std::stoi(meta("gat.embed_dim"));
    rc.train.gat.heads = std::stoi(meta("gat.heads"));
    rc.train.gat.gru_hidden = std::stoi(meta("gat.gru_hidden"));
    rc.train.gat.output_dim = std::stoi(meta("gat.output_dim"));
    rc.phi = std::stod(meta("phi"));
  } catch (const ConfigError& e) {
    throw VersionError(std::string("checkpoint: ") + e.what());
  } catch (const std::logic_error&) {
    throw VersionError("checkpoint: malformed metadata");
  }
  auto learner = make_learner(rc, seed);
  if (!learner) throw VersionError("checkpoint: agent kind has no parameters");
  learner->restore(ck);
  return learner;
}

inline Summary evaluate_checkpoint(const std::string& path, const io::RunConfig& c, int episodes, std::uint64_t seed,
                                   std::vector<EpisodeMetrics>* per_episode = nullptr) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  auto learner = learner_from_checkpoint(ck, c, seed);
  auto ms = evaluate(*learner, c.scenario, episodes, seed, c.train.gamma, false);
  if (per_episode) *per_episode = ms;
  return summarize(ms);
}

// ---------------------------------------------------------------------------
// Bound certification

inline bounds::CertificationReport certify_bounds(int count, std::uint64_t seed, const std::string& path) {
  if (count < 1) throw ConfigError("certify-bounds: count must be >= 1");
  auto rep = bounds::certify(count, seed);
  if (!path.empty()) {
    auto os = io::open_output(path);
    os << "# seed=" << seed << "\n# count=" << count << "\n# tolerance=1e-09\n";
    bounds::write_report_csv(os, rep);
  }
  return rep;
}

}  // namespace gadc::experiment
