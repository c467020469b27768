#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmdflow/config.hpp"
#include "mmdflow/flow.hpp"
#include "mmdflow/io.hpp"
#include "mmdflow/measures.hpp"
#include "mmdflow/objective.hpp"
#include "mmdflow/solvers.hpp"
#include "mmdflow/targets.hpp"
#include "mmdflow/version.hpp"

namespace mmdflow {

namespace fs = std::filesystem;

inline Eigen::MatrixXd load_ensemble(const RunConfig& cfg, bool target) {
  const std::string& csv = target ? cfg.target_csv : cfg.init_csv;
  if (!csv.empty()) {
    Eigen::MatrixXd pts = read_matrix_csv(csv);
    if (pts.cols() != 2)
      throw ConfigError(target ? "target.csv" : "init.csv", "expected 2 columns, got " +
                        std::to_string(pts.cols()));
    return pts;
  }
  SampleSpec spec;
  spec.name = target ? cfg.target_name : cfg.init_name;
  spec.count = target ? cfg.target_count : cfg.init_count;
  spec.seed = cfg.flow_seed + (target ? 1 : 2);
  spec.center_x = cfg.init_center_x;
  spec.center_y = cfg.init_center_y;
  spec.variance = cfg.init_variance;
  spec.ring_radius = cfg.target_ring_radius;
  spec.ring_spacing = cfg.target_ring_spacing;
  try {
    return sample(spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(target ? "target.name" : "init.name", e.what());
  }
}

inline void write_manifest(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream out(dir / "run_manifest.txt");
  out << "# resolved configuration\n" << resolved_config_text(cfg);
  out << "mmdflow.version = " << kVersion << "\n";
  out << "eigen.version = " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
      << EIGEN_MINOR_VERSION << "\n";
}

// Scatter frame with a fixed viewport derived from the target's bounding box
// plus a 10% margin; targets orange, particles blue.
inline void write_svg_frame(const fs::path& path, const Eigen::MatrixXd& particles,
                            const Eigen::MatrixXd& target) {
  const double x0 = target.col(0).minCoeff(), x1 = target.col(0).maxCoeff();
  const double y0 = target.col(1).minCoeff(), y1 = target.col(1).maxCoeff();
  const double mx = 0.1 * std::max(x1 - x0, 1e-9), my = 0.1 * std::max(y1 - y0, 1e-9);
  const double lox = x0 - mx, hix = x1 + mx, loy = y0 - my, hiy = y1 + my;
  const int W = 640, H = 640;
  auto px = [&](double x) { return (x - lox) / (hix - lox) * W; };
  auto py = [&](double y) { return H - (y - loy) / (hiy - loy) * H; };
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < target.rows(); ++i)
    out << "<circle cx=\"" << px(target(i, 0)) << "\" cy=\"" << py(target(i, 1))
        << "\" r=\"2\" fill=\"#e6813b\"/>\n";
  for (Eigen::Index i = 0; i < particles.rows(); ++i)
    out << "<circle cx=\"" << px(particles(i, 0)) << "\" cy=\"" << py(particles(i, 1))
        << "\" r=\"2\" fill=\"#3b6ee6\"/>\n";
  out << "</svg>\n";
}

inline void write_metrics_csv(const fs::path& path, const FlowTrace& trace) {
  std::ofstream out(path);
  out << "step,time,mmd2,w2,kinetic,rel_gap,lambda\n";
  for (const auto& r : trace.records) {
    out << r.step << "," << format17(r.time) << "," << format17(r.mmd2) << ","
        << format17(r.w2) << "," << format17(r.kinetic) << "," << format17(r.rel_gap) << ","
        << format17(r.lambda) << "\n";
  }
}

inline FlowTrace run_flow_mode(const RunConfig& cfg, bool svg, std::ostream& log) {
  const Eigen::MatrixXd target = load_ensemble(cfg, true);
  const Eigen::MatrixXd init = load_ensemble(cfg, false);
  const Entropy entropy = cfg.entropy();
  const RadialKernel kernel = cfg.kernel();

  const FlowTrace trace = run_flow(init, target, entropy, kernel, cfg.lambda, cfg.flow());
  for (const auto& w : trace.warnings) log << "warning: " << w << "\n";

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir / "snapshots");
  write_metrics_csv(dir / "metrics.csv", trace);
  for (const auto& [step, positions] : trace.snapshots)
    write_matrix_csv(dir / "snapshots" / ("positions_" + std::to_string(step) + ".csv"), positions);
  if (svg) {
    fs::create_directories(dir / "frames");
    for (const auto& [step, positions] : trace.snapshots)
      write_svg_frame(dir / "frames" / ("frame_" + std::to_string(step) + ".svg"), positions, target);
  }
  write_manifest(dir, cfg);
  return trace;
}

inline void run_divergence_mode(const RunConfig& cfg, std::ostream& out) {
  const Eigen::MatrixXd target = load_ensemble(cfg, true);
  const Eigen::MatrixXd init = load_ensemble(cfg, false);
  const auto problem =
      RegularizedProblem::make(cfg.entropy(), cfg.kernel(), cfg.lambda, init, target);
  const auto sol = solve_regularized(problem, cfg.solver());
  out << "divergence = " << format17(sol.primal_value) << "\n";
  out << "witness_norm = " << format17(std::sqrt(witness_norm2(problem, sol))) << "\n";
  out << "rel_gap = " << format17(sol.rel_gap) << "\n";
  out << "iterations = " << sol.iterations << "\n";
}

// Product-side prox reference: dense scan plus golden shrink over a wide
// clamped bracket, written only against the prox definition.
inline double prox_reference(const Entropy& e, double lam, double x) {
  auto obj = [&](double t) { return e.value(t) + (t - x) * (t - x) / (2.0 * lam); };
  const double hi = std::max({2.0, x + 1.0, 4.0 * lam + std::abs(x)});
  const int scan = 2000;
  double best_t = 1.0, best_v = obj(1.0);
  for (int i = 0; i <= scan; ++i) {
    const double t = hi * static_cast<double>(i) / scan;
    if (const double v = obj(t); v < best_v) {
      best_v = v;
      best_t = t;
    }
  }
  const double width = hi / scan;
  const double refined = detail::golden_min(obj, std::max(0.0, best_t - width), best_t + width, 1e-11);
  return obj(refined) <= best_v ? refined : best_t;
}

inline std::vector<std::pair<std::string, Entropy>> prox_check_catalog() {
  using EK = EntropyKind;
  std::vector<std::pair<std::string, Entropy>> v;
  auto add = [&](EK kind, double alpha = std::numeric_limits<double>::quiet_NaN()) {
    Entropy e = Entropy::make(kind, alpha);
    std::string label = e.name();
    if (std::isfinite(alpha)) label += "(" + std::to_string(alpha) + ")";
    v.emplace_back(label, e);
  };
  add(EK::tsallis, 0.5);
  add(EK::tsallis, 2.0);
  add(EK::tsallis, 3.0);
  add(EK::power, -1.0);
  add(EK::power, 0.5);
  add(EK::power, 2.0);
  add(EK::kl);
  add(EK::burg);
  add(EK::jeffreys);
  add(EK::jensen_shannon);
  add(EK::total_variation);
  add(EK::marton);
  add(EK::hockey_stick);
  add(EK::equality_indicator);
  add(EK::zero);
  add(EK::matusita, 0.5);
  add(EK::lindsay, 0.0);
  add(EK::lindsay, 0.5);
  return v;
}

inline bool run_prox_check_mode(std::ostream& out) {
  bool all_ok = true;
  for (const auto& [label, e] : prox_check_catalog()) {
    double worst = 0.0;
    for (double lam : {0.1, 1.0, 10.0}) {
      for (int i = -50; i <= 50; ++i) {
        const double x = 0.1 * i;
        worst = std::max(worst, std::abs(e.prox(lam, x) - prox_reference(e, lam, x)));
      }
    }
    out << label << " max_error = " << format17(worst) << "\n";
    all_ok = all_ok && worst <= 1e-7;
  }
  return all_ok;
}

// Returns process exit status: 0 on success.
inline int run_single(const RunConfig& cfg, bool svg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  if (cfg.mode == "prox_check") return run_prox_check_mode(out) ? 0 : 1;
  if (cfg.mode == "divergence") {
    run_divergence_mode(cfg, out);
    return 0;
  }
  run_flow_mode(cfg, svg, log);
  return 0;
}

// Multi-config runner: one metrics timeline per config plus a merged
// long-format CSV keyed by the keys whose raw values differ across configs.
inline int run_compare(const std::vector<fs::path>& config_paths, const std::string& output_dir,
                       std::ostream& log) {
  if (config_paths.size() < 2)
    throw ConfigError("compare", "needs at least two configuration files");
  std::vector<RunConfig> cfgs;
  for (const auto& path : config_paths) {
    RunConfig cfg = parse_config_file(path);
    if (cfg.mode != "flow" && cfg.mode != "tight_flow")
      throw ConfigError("mode", "compare requires flow or tight_flow configs (" + path.string() + ")");
    cfg.validate();
    cfgs.push_back(std::move(cfg));
  }

  // identical targets across all runs
  auto target_tag = [](const RunConfig& c) {
    return c.target_csv + "|" + c.target_name + "|" + std::to_string(c.target_count) + "|" +
           format17(c.target_ring_radius) + "|" + format17(c.target_ring_spacing) + "|" +
           std::to_string(c.flow_seed);
  };
  for (std::size_t i = 1; i < cfgs.size(); ++i)
    if (target_tag(cfgs[i]) != target_tag(cfgs[0]))
      throw ConfigError("target.name", "compare requires identical targets across configs");

  // sweep keys: raw entries that differ somewhere
  std::set<std::string> all_keys;
  for (const auto& c : cfgs)
    for (const auto& [k, v] : c.raw) all_keys.insert(k);
  std::vector<std::string> sweep_keys;
  for (const auto& k : all_keys) {
    std::set<std::string> values;
    for (const auto& c : cfgs) {
      const auto it = c.raw.find(k);
      values.insert(it == c.raw.end() ? std::string("<default>") : it->second);
    }
    if (values.size() > 1) sweep_keys.push_back(k);
  }

  const fs::path outdir(output_dir);
  fs::create_directories(outdir);
  std::ofstream merged(outdir / "compare.csv");
  merged << "config";
  for (const auto& k : sweep_keys) merged << "," << k;
  merged << ",step,time,mmd2,w2,kinetic,rel_gap,lambda\n";

  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    RunConfig cfg = cfgs[i];
    const std::string stem = config_paths[i].stem().string() + "_" + std::to_string(i);
    cfg.output_dir = (outdir / stem).string();
    log << "running " << config_paths[i].string() << " -> " << cfg.output_dir << "\n";
    const FlowTrace trace = run_flow_mode(cfg, false, log);
    for (const auto& r : trace.records) {
      merged << stem;
      for (const auto& k : sweep_keys) {
        const auto it = cfg.raw.find(k);
        merged << "," << (it == cfg.raw.end() ? std::string("<default>") : it->second);
      }
      merged << "," << r.step << "," << format17(r.time) << "," << format17(r.mmd2) << ","
             << format17(r.w2) << "," << format17(r.kinetic) << "," << format17(r.rel_gap) << ","
             << format17(r.lambda) << "\n";
    }
  }
  return 0;
}

}  // namespace mmdflow
