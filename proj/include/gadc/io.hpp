#pragma once

// Experiment configuration files and CSV emission.
//
// Two config syntaxes map onto the same dotted keys:
//   *.json / *.jsonc   nested JSON, // and /* */ comments allowed
//   anything else      flat "section.key = value" lines, # comments
// Every key is optional and unknown keys are rejected. configs/desk.jsonc
// and configs/desk.conf document the full schema.

#include "gadc/errors.hpp"
#include "gadc/gadc_agent.hpp"
#include "gadc/policy.hpp"
#include "gadc/swarm_env.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gadc::io {

using Json = nlohmann::ordered_json;

enum class AgentKind { kGadc, kMaddpg, kGatMaddpg, kEs, kRandom };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kGadc: return "gadc";
    case AgentKind::kMaddpg: return "maddpg";
    case AgentKind::kGatMaddpg: return "gat-maddpg";
    case AgentKind::kEs: return "es";
    case AgentKind::kRandom: return "random";
  }
  return "?";
}

inline AgentKind parse_agent(const std::string& s) {
  if (s == "gadc") return AgentKind::kGadc;
  if (s == "maddpg") return AgentKind::kMaddpg;
  if (s == "gat-maddpg") return AgentKind::kGatMaddpg;
  if (s == "es") return AgentKind::kEs;
  if (s == "random") return AgentKind::kRandom;
  throw ConfigError("unknown agent kind: " + s);
}

/// Everything a run needs besides the seed.
struct RunConfig {
  env::Scenario scenario;
  agent::TrainConfig train;
  AgentKind agent = AgentKind::kGadc;
  double phi = 0.3;  // weighted baselines and es
  int episodes = 300;
  int eval_episodes = 20;
  std::uint64_t es_samples = 1000;
  std::vector<std::uint64_t> seeds{1};

  void validate() const {
    try {
      scenario.validate();
      train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    } catch (const std::domain_error& e) {
      throw ConfigError(e.what());
    }
    if (agent == AgentKind::kMaddpg || agent == AgentKind::kGatMaddpg || agent == AgentKind::kEs) {
      if (!(phi > 0 && phi <= 1)) throw ConfigError("experiment.phi must be in (0,1]");
    }
    if (episodes < 0) throw ConfigError("experiment.episodes must be >= 0");
    if (eval_episodes < 0) throw ConfigError("experiment.eval_episodes must be >= 0");
    if (es_samples < 1) throw ConfigError("experiment.es_samples must be >= 1");
    if (seeds.empty()) throw ConfigError("experiment.seeds must be nonempty");
  }
};

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key: " + path_ + "." + it.key());
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  const auto& w = c.scenario.world;
  Json world = {{"map_side", w.map_side},
                {"num_uavs", w.num_uavs},
                {"num_uts", w.num_uts},
                {"horizon", w.horizon},
                {"slot_duration", w.slot_duration},
                {"uav_height", w.uav_height},
                {"connectivity_distance", w.connectivity_distance},
                {"observe_radius", w.observation_radius()}};
  Json obstacles = Json::array();
  for (const auto& r : w.obstacles) obstacles.push_back({r.x_min, r.y_min, r.x_max, r.y_max});
  world["obstacles"] = obstacles;
  const auto& e = c.scenario.energy;
  Json energy = {{"move_coeff", e.move_coeff},
                 {"hover_cost", e.hover_cost},
                 {"serve_power", e.serve_power},
                 {"neighbor_comm_cost", e.neighbor_comm_cost},
                 {"initial_battery", e.initial_battery}};
  const auto& ch = c.scenario.channel;
  Json channel = {{"mode", ch.mode == env::ChannelMode::kIdealDisk ? "ideal_disk" : "obstacle_occluded"},
                  {"observe_power_threshold", ch.observe_power_threshold},
                  {"service_power_threshold", ch.service_power_threshold}};
  Json actions = {{"short_step", c.scenario.actions.short_step}, {"long_step", c.scenario.actions.long_step}};
  const auto& t = c.train;
  Json gat = {{"encoder_hidden", t.gat.encoder_hidden},
              {"embed_dim", t.gat.embed_dim},
              {"heads", t.gat.heads},
              {"gru_hidden", t.gat.gru_hidden},
              {"output_dim", t.gat.output_dim}};
  Json train = {{"gamma", t.gamma},
                {"tau", t.tau},
                {"clip_epsilon", t.clip_epsilon},
                {"inner_iterations", t.inner_iterations},
                {"batch_size", t.batch_size},
                {"buffer_capacity", t.buffer_capacity},
                {"prob_floor", t.prob_floor},
                {"kl_max", t.kl_max},
                {"explore_start", t.explore_start},
                {"explore_end", t.explore_end},
                {"explore_fraction", t.explore_fraction},
                {"updates_per_slot", t.updates_per_slot},
                {"coverage_scale", t.coverage_scale},
                {"lifetime_scale", t.lifetime_scale},
                {"weighted_scale", t.weighted_scale},
                {"normalize_advantage", t.normalize_advantage},
                {"expected_q", t.expected_q},
                {"lifetime_trains_encoder", t.lifetime_trains_encoder},
                {"hidden", t.hidden},
                {"actor_lr", t.actor_opt.learning_rate},
                {"critic_lr", t.critic_opt.learning_rate},
                {"lifetime_actor_lr", t.lifetime_actor_lr},
                {"max_grad_norm", t.critic_opt.max_grad_norm},
                {"gat", gat}};
  Json exp = {{"agent", to_string(c.agent)},   {"phi", c.phi},
              {"episodes", c.episodes},        {"eval_episodes", c.eval_episodes},
              {"es_samples", c.es_samples},    {"seeds", c.seeds}};
  return Json{{"world", world}, {"energy", energy}, {"channel", channel}, {"actions", actions}, {"train", train},
              {"experiment", exp}};
}

inline RunConfig from_json(const Json& j) {
  RunConfig c;
  detail::Reader root(j, "config");
  if (const Json* wj = root.child("world")) {
    detail::Reader r(*wj, "world");
    auto& w = c.scenario.world;
    r.get("map_side", w.map_side);
    r.get("num_uavs", w.num_uavs);
    r.get("num_uts", w.num_uts);
    r.get("horizon", w.horizon);
    r.get("slot_duration", w.slot_duration);
    r.get("uav_height", w.uav_height);
    r.get("connectivity_distance", w.connectivity_distance);
    double ro = -1.0;
    r.get("observe_radius", ro);
    if (ro >= 0) w.observe_radius = ro;
    std::vector<std::vector<double>> obs;
    r.get("obstacles", obs);
    for (const auto& o : obs) {
      if (o.size() != 4) throw ConfigError("world.obstacles: each obstacle is [x_min, y_min, x_max, y_max]");
      w.obstacles.push_back({o[0], o[1], o[2], o[3]});
    }
    r.finish();
  }
  if (const Json* ej = root.child("energy")) {
    detail::Reader r(*ej, "energy");
    auto& e = c.scenario.energy;
    r.get("move_coeff", e.move_coeff);
    r.get("hover_cost", e.hover_cost);
    r.get("serve_power", e.serve_power);
    r.get("neighbor_comm_cost", e.neighbor_comm_cost);
    r.get("initial_battery", e.initial_battery);
    r.finish();
  }
  if (const Json* cj = root.child("channel")) {
    detail::Reader r(*cj, "channel");
    auto& ch = c.scenario.channel;
    std::string mode = "ideal_disk";
    r.get("mode", mode);
    if (mode == "ideal_disk") {
      ch.mode = env::ChannelMode::kIdealDisk;
    } else if (mode == "obstacle_occluded") {
      ch.mode = env::ChannelMode::kObstacleOccluded;
    } else {
      throw ConfigError("channel.mode must be ideal_disk or obstacle_occluded");
    }
    r.get("observe_power_threshold", ch.observe_power_threshold);
    r.get("service_power_threshold", ch.service_power_threshold);
    r.finish();
  }
  if (const Json* aj = root.child("actions")) {
    detail::Reader r(*aj, "actions");
    r.get("short_step", c.scenario.actions.short_step);
    r.get("long_step", c.scenario.actions.long_step);
    r.finish();
  }
  if (const Json* tj = root.child("train")) {
    detail::Reader r(*tj, "train");
    auto& t = c.train;
    r.get("gamma", t.gamma);
    r.get("tau", t.tau);
    r.get("clip_epsilon", t.clip_epsilon);
    r.get("inner_iterations", t.inner_iterations);
    r.get("batch_size", t.batch_size);
    r.get("buffer_capacity", t.buffer_capacity);
    r.get("prob_floor", t.prob_floor);
    r.get("kl_max", t.kl_max);
    r.get("explore_start", t.explore_start);
    r.get("explore_end", t.explore_end);
    r.get("explore_fraction", t.explore_fraction);
    r.get("updates_per_slot", t.updates_per_slot);
    r.get("coverage_scale", t.coverage_scale);
    r.get("lifetime_scale", t.lifetime_scale);
    r.get("weighted_scale", t.weighted_scale);
    r.get("normalize_advantage", t.normalize_advantage);
    r.get("expected_q", t.expected_q);
    r.get("lifetime_trains_encoder", t.lifetime_trains_encoder);
    r.get("hidden", t.hidden);
    r.get("actor_lr", t.actor_opt.learning_rate);
    r.get("lifetime_actor_lr", t.lifetime_actor_lr);
    r.get("critic_lr", t.critic_opt.learning_rate);
    double clip = 0.0;
    r.get("max_grad_norm", clip);
    t.actor_opt.max_grad_norm = clip;
    t.critic_opt.max_grad_norm = clip;
    if (const Json* gj = r.child("gat")) {
      detail::Reader g(*gj, "train.gat");
      g.get("encoder_hidden", t.gat.encoder_hidden);
      g.get("embed_dim", t.gat.embed_dim);
      g.get("heads", t.gat.heads);
      g.get("gru_hidden", t.gat.gru_hidden);
      g.get("output_dim", t.gat.output_dim);
      g.finish();
    }
    r.finish();
  }
  if (const Json* xj = root.child("experiment")) {
    detail::Reader r(*xj, "experiment");
    std::string agent = to_string(c.agent);
    r.get("agent", agent);
    c.agent = parse_agent(agent);
    r.get("phi", c.phi);
    r.get("episodes", c.episodes);
    r.get("eval_episodes", c.eval_episodes);
    r.get("es_samples", c.es_samples);
    r.get("seeds", c.seeds);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline Json load_json(const std::string& path);

/// Parses a scalar or array literal; bare words become strings.
inline Json parse_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return Json(text);
  }
}

/// Sets a dotted key such as "train.clip_epsilon" inside `j`.
inline void set_path(Json& j, const std::string& dotted, const Json& value) {
  Json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed config key: " + dotted);
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    if (!cur->contains(part)) (*cur)[part] = Json::object();
    cur = &(*cur)[part];
    if (!cur->is_object()) throw ConfigError("config key is not a section: " + dotted);
    start = dot + 1;
  }
}

/// Applies "key=value" overrides.
inline void apply_overrides(Json& j, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + o);
    set_path(j, o.substr(0, eq), parse_value(o.substr(eq + 1)));
  }
}

/// Flat "a.b.c = value" lines; values are JSON literals or bare words.
inline Json parse_flat_text(const std::string& text, const std::string& origin) {
  Json j = Json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    set_path(j, key, parse_value(value));
  }
  return j;
}

inline Json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".json" || ext == ".jsonc") return parse_json_text(ss.str(), path);
  return parse_flat_text(ss.str(), path);
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Json j = path.empty() ? Json::object() : load_json(path);
  apply_overrides(j, overrides);
  return from_json(j);
}

/// Flattens to dotted key=value pairs in document order.
inline std::vector<std::pair<std::string, std::string>> flatten(const Json& j, const std::string& prefix = "") {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      auto sub = flatten(*it, key);
      out.insert(out.end(), sub.begin(), sub.end());
    } else if (it->is_string()) {
      out.emplace_back(key, it->get<std::string>());
    } else {
      out.emplace_back(key, it->dump());
    }
  }
  return out;
}

/// "# key=value" provenance header.
inline void write_header(std::ostream& os, const RunConfig& c, std::uint64_t seed,
                         const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  os << "# seed=" << seed << '\n';
  for (const auto& [k, v] : extra) os << "# " << k << '=' << v << '\n';
  for (const auto& [k, v] : flatten(to_json(c))) os << "# " << k << '=' << v << '\n';
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << std::setprecision(17);
  return os;
}

inline void write_metrics_header(std::ostream& os) {
  os << "episode,sum_r_c,min_energy_lifetime,episode_return_c,episode_return_f,mean_kl,actor_loss,critic_losses,"
        "mean_r_c,final_min_energy\n";
}

inline void write_metrics_row(std::ostream& os, const EpisodeMetrics& m) {
  os << m.episode << ',' << m.sum_r_c << ',' << m.lifetime << ',' << m.return_c << ',' << m.return_f << ','
     << m.mean_kl << ',' << m.actor_loss << ',' << m.critic_loss_c << ';' << m.critic_loss_f << ',' << m.mean_r_c()
     << ',' << m.final_min_energy << '\n';
}

inline void write_metrics(std::ostream& os, const std::vector<EpisodeMetrics>& ms) {
  write_metrics_header(os);
  for (const auto& m : ms) write_metrics_row(os, m);
}

/// Per-slot, per-UAV trace of one greedy episode.
inline void write_trajectory(std::ostream& os, Policy& policy, env::World& world, std::uint64_t world_seed,
                             int episode = 0) {
  os << "episode,slot,uav,x,y,energy,served_count,r_c,r_f\n";
  world.reset(world_seed);
  policy.begin_episode(world);
  while (!world.done()) {
    const auto r = world.step(policy.act(world, false));
    for (int n = 0; n < r.state.num_uavs(); ++n) {
      os << episode << ',' << r.state.slot << ',' << n << ',' << r.state.uav_pos[n].x << ',' << r.state.uav_pos[n].y
         << ',' << r.state.uav_energy[n] << ',' << r.assignment.counts[n] << ',' << r.reward.coverage << ','
         << r.reward.lifetime << '\n';
    }
  }
}

}  // namespace gadc::io
