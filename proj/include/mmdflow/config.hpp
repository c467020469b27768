#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmdflow/entropy.hpp"
#include "mmdflow/flow.hpp"
#include "mmdflow/io.hpp"
#include "mmdflow/kernels.hpp"
#include "mmdflow/solvers.hpp"
#include "mmdflow/targets.hpp"

namespace mmdflow {

// Configuration errors carry the offending key so the CLI can name it.
struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string key_, const std::string& what)
      : std::runtime_error("config key '" + key_ + "': " + what), key(std::move(key_)) {}
};

// Flat key-value run configuration with dotted sections.  `raw` keeps the
// file's literal entries for the compare tool's sweep detection and for the
// manifest.
struct RunConfig {
  std::string mode = "flow";  // flow | divergence | tight_flow | prox_check

  std::string entropy_name = "tsallis";
  double entropy_alpha = std::numeric_limits<double>::quiet_NaN();

  std::string kernel_family = "inverse_multiquadric";
  double kernel_sigma2 = 0.05;

  double lambda = 1e-2;

  double flow_tau = 1e-3;
  long flow_steps = 1000;
  long flow_snapshot_every = 100;
  std::vector<AnnealEvent> flow_anneal;
  double flow_stop_kinetic = 0.0;
  std::uint64_t flow_seed = 0;
  std::string flow_bound_policy = "warn";

  int solver_max_iters = 20000;
  double solver_gap_tol = 1e-8;
  std::string solver_step_rule = "fixed_lipschitz";
  int solver_gap_check_every = 10;

  std::string target_name = "three_rings";
  std::string target_csv;
  long target_count = 300;
  double target_ring_radius = 0.3;
  double target_ring_spacing = 0.75;

  std::string init_name = "gaussian_init";
  std::string init_csv;
  long init_count = 300;
  double init_center_x = 0.45;
  double init_center_y = 0.0;
  double init_variance = 2e-3;

  std::string output_dir = "out";

  std::map<std::string, std::string> raw;

  Entropy entropy() const {
    try {
      return Entropy::from_name(entropy_name, entropy_alpha);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("entropy.name", e.what());
    }
  }

  RadialKernel kernel() const {
    try {
      return RadialKernel::from_name(kernel_family, kernel_sigma2, 2);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("kernel.family", e.what());
    }
  }

  SolverConfig solver() const {
    SolverConfig cfg;
    cfg.max_iters = solver_max_iters;
    cfg.gap_tol = solver_gap_tol;
    cfg.gap_check_every = solver_gap_check_every;
    try {
      cfg.step_rule = step_rule_from_name(solver_step_rule);
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("solver.step_rule", e.what());
    }
    return cfg;
  }

  FlowConfig flow() const {
    FlowConfig cfg;
    cfg.tau = flow_tau;
    cfg.steps = flow_steps;
    cfg.snapshot_every = flow_snapshot_every;
    cfg.anneal = flow_anneal;
    cfg.stop_kinetic = flow_stop_kinetic;
    cfg.seed = flow_seed;
    cfg.solver = solver();
    cfg.tight = mode == "tight_flow";
    if (flow_bound_policy == "warn")
      cfg.bound_policy = BoundPolicy::warn;
    else if (flow_bound_policy == "enforce")
      cfg.bound_policy = BoundPolicy::enforce;
    else
      throw ConfigError("flow.bound_policy", "expected warn or enforce");
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("flow.tau", e.what());
    }
    return cfg;
  }

  void validate() const {
    if (mode != "flow" && mode != "divergence" && mode != "tight_flow" && mode != "prox_check")
      throw ConfigError("mode", "expected flow, divergence, tight_flow or prox_check");
    if (mode == "prox_check") return;
    (void)entropy();
    (void)kernel();
    if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
    if (target_csv.empty() && target_count < 1) throw ConfigError("target.count", "must be >= 1");
    if (init_csv.empty() && init_count < 1) throw ConfigError("init.count", "must be >= 1");
    if (mode == "flow" || mode == "tight_flow") (void)flow();
    if (mode == "tight_flow" && std::isfinite(entropy().recession()))
      throw ConfigError("mode", "tight_flow requires an entropy with infinite recession constant");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "not a number: " + value);
  }
}

inline long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "not an integer: " + value);
  }
}

// "5:5, 10:5, 20:5" -> {(5,5), (10,5), (20,5)}
inline std::vector<AnnealEvent> parse_anneal(const std::string& key, const std::string& value) {
  std::vector<AnnealEvent> events;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key, "expected time:divisor, got " + item);
    AnnealEvent ev;
    ev.time = parse_double(key, trim(item.substr(0, colon)));
    ev.divisor = parse_double(key, trim(item.substr(colon + 1)));
    events.push_back(ev);
  }
  return events;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_anneal;
  using detail::parse_double;
  using detail::parse_long;
  if (key == "mode") cfg.mode = value;
  else if (key == "entropy.name") cfg.entropy_name = value;
  else if (key == "entropy.alpha") cfg.entropy_alpha = parse_double(key, value);
  else if (key == "kernel.family") cfg.kernel_family = value;
  else if (key == "kernel.sigma2") cfg.kernel_sigma2 = parse_double(key, value);
  else if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "flow.tau") cfg.flow_tau = parse_double(key, value);
  else if (key == "flow.steps") cfg.flow_steps = parse_long(key, value);
  else if (key == "flow.snapshot_every") cfg.flow_snapshot_every = parse_long(key, value);
  else if (key == "flow.anneal") cfg.flow_anneal = parse_anneal(key, value);
  else if (key == "flow.stop_kinetic") cfg.flow_stop_kinetic = parse_double(key, value);
  else if (key == "flow.seed") cfg.flow_seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "flow.bound_policy") cfg.flow_bound_policy = value;
  else if (key == "solver.max_iters") cfg.solver_max_iters = static_cast<int>(parse_long(key, value));
  else if (key == "solver.gap_tol") cfg.solver_gap_tol = parse_double(key, value);
  else if (key == "solver.step_rule") cfg.solver_step_rule = value;
  else if (key == "solver.gap_check_every")
    cfg.solver_gap_check_every = static_cast<int>(parse_long(key, value));
  else if (key == "target.name") cfg.target_name = value;
  else if (key == "target.csv") cfg.target_csv = value;
  else if (key == "target.count") cfg.target_count = parse_long(key, value);
  else if (key == "target.ring_radius") cfg.target_ring_radius = parse_double(key, value);
  else if (key == "target.ring_spacing") cfg.target_ring_spacing = parse_double(key, value);
  else if (key == "init.name") cfg.init_name = value;
  else if (key == "init.csv") cfg.init_csv = value;
  else if (key == "init.count") cfg.init_count = parse_long(key, value);
  else if (key == "init.center_x") cfg.init_center_x = parse_double(key, value);
  else if (key == "init.center_y") cfg.init_center_y = parse_double(key, value);
  else if (key == "init.variance") cfg.init_variance = parse_double(key, value);
  else if (key == "output_dir") cfg.output_dir = value;
  else throw ConfigError(key, "unknown key");
  cfg.raw[key] = value;
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// The resolved settings, defaults included, one line per key.
inline std::string resolved_config_text(const RunConfig& c) {
  std::ostringstream out;
  auto kv = [&](const std::string& k, const std::string& v) { out << k << " = " << v << "\n"; };
  kv("mode", c.mode);
  kv("entropy.name", c.entropy_name);
  if (std::isfinite(c.entropy_alpha)) kv("entropy.alpha", format17(c.entropy_alpha));
  kv("kernel.family", c.kernel_family);
  kv("kernel.sigma2", format17(c.kernel_sigma2));
  kv("lambda", format17(c.lambda));
  kv("flow.tau", format17(c.flow_tau));
  kv("flow.steps", std::to_string(c.flow_steps));
  kv("flow.snapshot_every", std::to_string(c.flow_snapshot_every));
  if (!c.flow_anneal.empty()) {
    std::string s;
    for (const auto& ev : c.flow_anneal) {
      if (!s.empty()) s += ", ";
      s += format17(ev.time) + ":" + format17(ev.divisor);
    }
    kv("flow.anneal", s);
  }
  kv("flow.stop_kinetic", format17(c.flow_stop_kinetic));
  kv("flow.seed", std::to_string(c.flow_seed));
  kv("flow.bound_policy", c.flow_bound_policy);
  kv("solver.max_iters", std::to_string(c.solver_max_iters));
  kv("solver.gap_tol", format17(c.solver_gap_tol));
  kv("solver.step_rule", c.solver_step_rule);
  kv("solver.gap_check_every", std::to_string(c.solver_gap_check_every));
  if (c.target_csv.empty()) {
    kv("target.name", c.target_name);
    kv("target.count", std::to_string(c.target_count));
    kv("target.ring_radius", format17(c.target_ring_radius));
    kv("target.ring_spacing", format17(c.target_ring_spacing));
  } else {
    kv("target.csv", c.target_csv);
  }
  if (c.init_csv.empty()) {
    kv("init.name", c.init_name);
    kv("init.count", std::to_string(c.init_count));
    kv("init.center_x", format17(c.init_center_x));
    kv("init.center_y", format17(c.init_center_y));
    kv("init.variance", format17(c.init_variance));
  } else {
    kv("init.csv", c.init_csv);
  }
  kv("output_dir", c.output_dir);
  return out.str();
}

}  // namespace mmdflow
