// gadc: command-line driver.
//
//   gadc train          --config C [--set k=v]... [--seeds 1,2] [--workers W] [--out DIR]
//   gadc sweep          --config C --axis KEY --values v1,v2 [...]
//   gadc eval           --checkpoint F --config C [--episodes E] [--seed S] [--out FILE] [--trajectory FILE]
//   gadc certify-bounds --count K [--seed S] [--out FILE]
//   gadc es-bound       --config C [--samples K] [--phi P] [--episodes E] [--seeds ...] [--out DIR]
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O or checkpoint error,
// 4 certification failure, 1 anything else.

#include "gadc/errors.hpp"
#include "gadc/experiment.hpp"
#include "gadc/io.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitCertification = 4;

void print_summary(const gadc::experiment::RunOutput& out) {
  std::cout << "sweep_value,seeds,coverage_mean,coverage_std,lifetime_mean,lifetime_std\n";
  for (const auto& a : out.summary) {
    std::cout << (a.sweep_value.empty() ? "-" : a.sweep_value) << ',' << a.seeds << ',' << a.coverage_mean << ','
              << a.coverage_std << ',' << a.lifetime_mean << ',' << a.lifetime_std << '\n';
  }
  std::cout << "summary written to " << out.summary_path << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  gadc::experiment::tune_allocator();
  CLI::App app{"GADC multi-UAV coverage workbench"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::uint64_t> seeds;
  int workers = 1;
  std::string out_dir = "runs";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "scenario/experiment config (JSON with comments)");
    sub->add_option("--set", overrides, "override a config key, e.g. train.clip_epsilon=0.3");
    sub->add_option("-s,--seeds", seeds, "seed list")->delimiter(',');
    sub->add_option("-w,--workers", workers, "parallel jobs")->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", out_dir, "output directory");
  };

  auto* train = app.add_subcommand("train", "train an agent per seed, write metrics and checkpoints");
  add_common(train);

  auto* sweep = app.add_subcommand("sweep", "train over a list of values of one config key");
  add_common(sweep);
  std::string axis;
  std::vector<std::string> values;
  sweep->add_option("--axis", axis, "dotted config key to vary")->required();
  sweep->add_option("--values", values, "values of the axis")->delimiter(',')->required();

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  std::string checkpoint;
  int episodes = 20;
  std::uint64_t seed = 1;
  std::string out_file;
  std::string trajectory_file;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("-c,--config", config, "scenario config");
  eval->add_option("--set", overrides, "override a config key");
  eval->add_option("-e,--episodes", episodes, "evaluation episodes")->check(CLI::NonNegativeNumber);
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("-o,--out", out_file, "per-episode metrics CSV");
  eval->add_option("--trajectory", trajectory_file, "per-slot UAV trace of the first evaluation episode");

  auto* certify = app.add_subcommand("certify-bounds", "certify the policy-difference bounds on random tabular MDPs");
  int count = 100;
  certify->add_option("-n,--count", count, "number of random instances");
  certify->add_option("--seed", seed, "generator seed");
  certify->add_option("-o,--out", out_file, "report CSV");
  certify->add_option("-w,--workers", workers, "accepted for symmetry; certification is single-threaded");

  auto* es = app.add_subcommand("es-bound", "one-step sampled search reference");
  add_common(es);
  std::uint64_t samples = 0;
  double phi = -1.0;
  es->add_option("-k,--samples", samples, "joint actions sampled per slot");
  es->add_option("--phi", phi, "weight of coverage in the searched reward");
  es->add_option("-e,--episodes", episodes, "evaluation episodes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train || *sweep) {
      gadc::experiment::ExperimentSpec spec;
      spec.config_path = config;
      spec.overrides = overrides;
      spec.seeds = seeds;
      spec.workers = workers;
      spec.output_dir = out_dir;
      if (*sweep) spec.sweep = {axis, values};
      print_summary(gadc::experiment::run(spec));
      return 0;
    }
    if (*eval) {
      const auto cfg = gadc::io::load_config(config, overrides);
      std::vector<gadc::EpisodeMetrics> per;
      const auto s = gadc::experiment::evaluate_checkpoint(checkpoint, cfg, episodes, seed, &per);
      if (!out_file.empty()) {
        auto os = gadc::io::open_output(out_file);
        gadc::io::write_header(os, cfg, seed, {{"checkpoint", checkpoint}});
        gadc::io::write_metrics(os, per);
      }
      if (!trajectory_file.empty()) {
        auto learner = gadc::experiment::learner_from_checkpoint(gadc::nn::load_checkpoint(checkpoint), cfg, seed);
        gadc::env::World world(cfg.scenario);
        auto os = gadc::io::open_output(trajectory_file);
        gadc::io::write_header(os, cfg, seed, {{"checkpoint", checkpoint}});
        gadc::io::write_trajectory(os, *learner, world, gadc::eval_episode_seed(seed, 0));
      }
      std::cout << "episodes," << s.episodes << "\ncoverage_mean," << s.mean_coverage << "\nlifetime_mean,"
                << s.mean_lifetime << '\n';
      return 0;
    }
    if (*certify) {
      const auto rep = gadc::experiment::certify_bounds(count, seed, out_file);
      std::cout << "instances," << rep.instances.size() << "\nfailures," << rep.failures() << '\n';
      return rep.pass() ? 0 : kExitCertification;
    }
    if (*es) {
      std::vector<std::string> ov = overrides;
      ov.emplace_back("experiment.agent=es");
      if (samples > 0) ov.push_back("experiment.es_samples=" + std::to_string(samples));
      if (phi >= 0) ov.push_back("experiment.phi=" + std::to_string(phi));
      if (es->count("--episodes") > 0) ov.push_back("experiment.eval_episodes=" + std::to_string(episodes));
      gadc::experiment::ExperimentSpec spec;
      spec.config_path = config;
      spec.overrides = ov;
      spec.seeds = seeds;
      spec.workers = workers;
      spec.output_dir = out_dir;
      print_summary(gadc::experiment::run(spec));
      return 0;
    }
  } catch (const gadc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gadc::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const gadc::VersionError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
