#include "sjde/config.hpp"
#include "sjde/design.hpp"
#include "sjde/io.hpp"
#include "sjde/network.hpp"
#include "sjde/parallel.hpp"
#include "sjde/plot.hpp"
#include "sjde/simulate.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace sjde;

namespace {

struct Globals {
  std::string config;
  std::string out = "out";
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig load(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.workers) cfg.simulate.workers = *g.workers;
  return cfg;
}

int workers_of(const RunConfig& cfg) { return std::max(1, cfg.simulate.workers); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
  if (!out) throw CliError("failed writing " + path.string());
}

fs::path policy_path(const fs::path& out, int k) { return out / "policies" / ("node_" + std::to_string(k + 1) + ".json"); }

struct NetworkFiles {
  NetworkGraph graph;
  Eigen::MatrixXd weights;
};

NetworkFiles load_network(const fs::path& out) {
  const fs::path gp = out / "network.txt", wp = out / "weights.csv";
  if (!fs::exists(gp) || !fs::exists(wp))
    throw CliError("missing network files in " + out.string() + " (run 'generate' first)");
  NetworkFiles f;
  f.graph = load_graph(gp);
  std::ifstream in(wp);
  f.weights = read_matrix_csv(in, wp.string());
  if (f.weights.rows() != f.graph.size() || f.weights.cols() != f.graph.size())
    throw CliError(wp.string() + ": weight matrix size differs from the graph in " + gp.string());
  return f;
}

int cmd_generate(const Globals& g) {
  RunConfig cfg = load(g);
  if (g.seed) cfg.network.seed = *g.seed;
  NetworkGraph graph;
  int attempts = 0;
  if (!cfg.network.edges_file.empty()) {
    graph = load_graph(cfg.network.edges_file);
  } else {
    graph = generate_geometric_network(cfg.network.nodes, cfg.network.radius, cfg.network.seed,
                                       cfg.network.max_attempts, &attempts);
  }
  Eigen::MatrixXd w;
  if (cfg.network.weights == "laplacian") {
    const LaplacianWeights lw = laplacian_weights(graph, cfg.network.laplacian_c);
    if (!lw.nonnegative)
      std::cerr << "warning: W = I - cL has negative entries for c = " << cfg.network.laplacian_c
                << "; policies cannot be designed for it\n";
    w = lw.weights;
  } else {
    w = equal_weights(graph);
  }
  const fs::path out = g.out;
  fs::create_directories(out);
  save_graph(out / "network.txt", graph);
  std::ostringstream csv;
  write_matrix_csv(csv, w);
  write_text(out / "weights.csv", csv.str());

  int dmin = graph.size(), dmax = 0;
  double dsum = 0;
  for (int k = 0; k < graph.size(); ++k) {
    dmin = std::min(dmin, graph.degree(k));
    dmax = std::max(dmax, graph.degree(k));
    dsum += graph.degree(k);
  }
  std::cout << "nodes " << graph.size() << "\nedges " << graph.edges.size() << "\nconnected "
            << (graph.connected() ? "yes" : "no") << "\ndegree min " << dmin << " mean "
            << dsum / std::max(1, graph.size()) << " max " << dmax << "\n";
  if (attempts > 0) std::cout << "placement attempts " << attempts << "\n";
  std::cout << "wrote " << (out / "network.txt").string() << " and " << (out / "weights.csv").string() << "\n";
  return 0;
}

nlohmann::json metrics_json(const GridEvaluation& e) {
  return {{"alpha0", e.alpha[0]}, {"alpha1", e.alpha[1]}, {"mse0", e.mse[0]},
          {"mse1", e.mse[1]},     {"asn", e.asn},         {"residual_mass", e.residual_mass}};
}

nlohmann::json coefficients_json(const CostCoefficients& c) {
  return {{"lambda0", c.lambda[0]}, {"lambda1", c.lambda[1]}, {"mu0", c.mu[0]}, {"mu1", c.mu[1]}};
}

int cmd_design(const Globals& g, bool fallback_dual) {
  RunConfig cfg = load(g);
  if (g.seed) cfg.design.seed = *g.seed;
  const bool dual = fallback_dual || cfg.design.solver == "dual";
  const fs::path out = g.out;
  const NetworkFiles net = load_network(out);
  const DesignSpec spec = cfg.design_spec();
  spec.validate();
  const auto stats = compute_state_stats<double>(net.weights, cfg.model.sigma, spec.horizon);
  const std::uint64_t fp = policy_fingerprint(net.weights, cfg.model, spec.grid, spec.horizon);
  const int nodes = net.graph.size();
  fs::create_directories(out / "policies");
  fs::create_directories(out / "plots");

  std::vector<nlohmann::json> log(nodes);
  std::vector<int> failed(nodes, 0);
  parallel_for(static_cast<std::size_t>(nodes), workers_of(cfg), [&](std::size_t idx) {
    const int k = static_cast<int>(idx);
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json entry = {{"node", k + 1}, {"solver", dual ? "dual" : "lp"}, {"fingerprint", fingerprint_hex(fp)},
                            {"step_model", to_string(spec.step_model)}};
    try {
      const NodeContext ctx = build_node_context(spec, cfg.model, stats, k, 1);
      PolicyTable policy;
      if (dual) {
        DualAscentOptions opt;
        opt.max_iterations = cfg.design.dual_iterations;
        const DualAscentResult r = dual_ascent_fallback(spec, ctx, opt);
        policy = r.policy;
        entry["status"] = r.converged ? "converged" : "iteration_limit";
        entry["iterations"] = r.trajectory.size();
      } else {
        const DesignResult r = solve_coefficients(spec, ctx, StagedStoppingSolver(spec.tolerance));
        policy = r.policy;
        entry["status"] = to_string(r.lp.status);
        entry["lp"] = {{"objective", r.lp.objective}, {"bound", r.lp.bound}, {"cuts", r.lp.iterations},
                       {"rho0_policy", r.policy_start_value}};
        entry["design_kernel"] = {{"alpha0", r.design_errors[0]}, {"alpha1", r.design_errors[1]},
                                  {"mse0", r.design_errors[2]},   {"mse1", r.design_errors[3]},
                                  {"asn", r.design_asn}};
      }
      policy.node = k;
      policy.fingerprint = fp;
      entry["coefficients"] = coefficients_json(policy.coefficients);
      entry["grid_predictive"] =
          metrics_json(evaluate_policy_on_grid(policy, ctx.kernels(StepModel::predictive), cfg.model.prior_prob));
      entry["grid_network"] =
          metrics_json(evaluate_policy_on_grid(policy, ctx.kernels(StepModel::network), cfg.model.prior_prob));
      save_policy(policy_path(out, k), policy);
      write_text(out / "plots" / ("policy_node_" + std::to_string(k + 1) + ".svg"), policy_region_svg(policy));
    } catch (const std::exception& e) {
      failed[k] = 1;
      entry["status"] = "failed";
      entry["error"] = e.what();
    }
    entry["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log[k] = std::move(entry);
  });

  std::ofstream lf(out / "design_log.jsonl", std::ios::app);
  int failures = 0;
  for (int k = 0; k < nodes; ++k) {
    lf << log[k].dump() << "\n";
    const auto& e = log[k];
    if (failed[k]) {
      ++failures;
      std::cerr << "node " << k + 1 << ": design failed: " << e["error"].get<std::string>() << "\n";
      continue;
    }
    const auto& c = e["coefficients"];
    const auto& m = e["grid_predictive"];
    std::printf("node %3d  %-10s lambda=(%.4g, %.4g) mu=(%.4g, %.4g)  alpha=(%.3g, %.3g) mse=(%.3g, %.3g) asn=%.3f\n",
                k + 1, e["status"].get<std::string>().c_str(), c["lambda0"].get<double>(), c["lambda1"].get<double>(),
                c["mu0"].get<double>(), c["mu1"].get<double>(), m["alpha0"].get<double>(), m["alpha1"].get<double>(),
                m["mse0"].get<double>(), m["mse1"].get<double>(), m["asn"].get<double>());
  }
  std::cout << "policies in " << (out / "policies").string() << ", log appended to "
            << (out / "design_log.jsonl").string() << "\n";
  if (failures > 0) {
    std::cerr << failures << " of " << nodes << " nodes failed\n";
    return 1;
  }
  return 0;
}

std::vector<PolicyTable> load_policies(const fs::path& out, int nodes, std::uint64_t expected) {
  std::vector<PolicyTable> policies;
  for (int k = 0; k < nodes; ++k) {
    const fs::path p = policy_path(out, k);
    if (!fs::exists(p)) throw CliError("missing policy file " + p.string() + " (run 'design' first)");
    PolicyTable t = load_policy(p);
    if (t.fingerprint != expected)
      throw CliError(p.string() + ": policy fingerprint " + fingerprint_hex(t.fingerprint) +
                     " does not match the current network/model/grid/N (" + fingerprint_hex(expected) +
                     "); rerun 'design'");
    policies.push_back(std::move(t));
  }
  return policies;
}

int cmd_simulate(const Globals& g, bool dump_trials, std::optional<std::uint64_t> runs) {
  RunConfig cfg = load(g);
  if (g.seed) cfg.simulate.seed = *g.seed;
  if (runs) cfg.simulate.runs = *runs;
  const fs::path out = g.out;
  const NetworkFiles net = load_network(out);
  const std::uint64_t fp = policy_fingerprint(net.weights, cfg.model, cfg.design.grid, cfg.design.horizon);
  const auto policies = load_policies(out, net.graph.size(), fp);

  SimulationOptions opt;
  opt.workers = workers_of(cfg);
  opt.keep_trials = dump_trials;
  const SimulationSummary s = monte_carlo(policies, net.weights, cfg.model, cfg.simulate.runs, cfg.simulate.seed, opt);

  std::ostringstream r, se;
  write_results_csv(r, s);
  write_stderr_csv(se, s);
  write_text(out / "results.csv", r.str());
  write_text(out / "results_stderr.csv", se.str());
  if (dump_trials) {
    std::ostringstream t;
    write_trials_csv(t, s.trials);
    write_text(out / "trials.csv", t.str());
  }
  write_text(out / "plots" / "results.svg", results_svg(s, cfg.constraints, cfg.design.horizon));
  std::cout << r.str();
  std::cout << "wrote " << (out / "results.csv").string() << " and " << (out / "plots" / "results.svg").string()
            << "\n";
  return 0;
}

int cmd_report(const Globals& g) {
  RunConfig cfg = load(g);
  const fs::path out = g.out;
  const NetworkFiles net = load_network(out);
  const std::uint64_t fp = policy_fingerprint(net.weights, cfg.model, cfg.design.grid, cfg.design.horizon);
  int rendered = 0;
  for (int k = 0; k < net.graph.size(); ++k) {
    const fs::path p = policy_path(out, k);
    if (!fs::exists(p)) continue;
    const PolicyTable t = load_policy(p);
    if (t.fingerprint != fp) std::cerr << "warning: " << p.string() << " was designed for a different configuration\n";
    write_text(out / "plots" / ("policy_node_" + std::to_string(k + 1) + ".svg"), policy_region_svg(t));
    ++rendered;
  }
  std::cout << "rendered " << rendered << " policy plots\n";

  const fs::path rp = out / "results.csv";
  if (!fs::exists(rp)) {
    std::cout << "no results.csv yet (run 'simulate')\n";
    return 0;
  }
  std::ifstream in(rp);
  const auto rows = read_results_csv(in, rp.string());
  std::map<std::string, Metrics> se;
  if (fs::exists(out / "results_stderr.csv")) {
    std::ifstream sin(out / "results_stderr.csv");
    for (const auto& row : read_results_csv(sin, (out / "results_stderr.csv").string())) se[row.node] = row.metrics;
  }
  SimulationSummary s;
  for (const auto& row : rows) {
    Metrics m = row.metrics;
    if (se.count(row.node)) {
      const Metrics& e = se[row.node];
      m.alpha_se = e.alpha;
      m.mse_se = e.mse;
      m.asn_se = e.asn;
    }
    s.runs = row.runs;
    s.seed = row.seed;
    if (row.node == "network") {
      s.network = m;
    } else {
      s.nodes.push_back(m);
    }
  }
  write_text(out / "plots" / "results.svg", results_svg(s, cfg.constraints, cfg.design.horizon));

  const auto& c = cfg.constraints;
  std::printf("%-8s %12s %12s %10s %10s %8s\n", "node", "alpha0", "alpha1", "mse0", "mse1", "asn");
  std::printf("%-8s %12.3g %12.3g %10.3g %10.3g %8d\n", "target", c.alpha[0], c.alpha[1], c.beta[0], c.beta[1],
              cfg.design.horizon);
  auto show = [](const std::string& name, const Metrics& m) {
    std::printf("%-8s %12.3g %12.3g %10.4f %10.4f %8.3f\n", name.c_str(), m.alpha[0], m.alpha[1], m.mse[0], m.mse[1],
                m.asn);
  };
  for (std::size_t k = 0; k < s.nodes.size(); ++k) show(std::to_string(k + 1), s.nodes[k]);
  show("network", s.network);
  std::cout << "wrote " << (out / "plots" / "results.svg").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed sequential joint detection and estimation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Configuration file (defaults apply when omitted)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override the seed of the selected command");

  auto* gen = app.add_subcommand("generate", "Generate the sensor network and its weight matrix");
  bool fallback = false, dump = false;
  std::optional<std::uint64_t> runs;
  auto* des = app.add_subcommand("design", "Design one policy per node");
  des->add_flag("--fallback-dual", fallback, "Use dual ascent on grid-evaluated errors instead of the LP");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo validation of the designed policies");
  sim->add_flag("--dump-trials", dump, "Also write every trial to trials.csv");
  sim->add_option("--runs", runs, "Override simulate.runs")->check(CLI::PositiveNumber);
  auto* rep = app.add_subcommand("report", "Re-render plots and print the results table");
  auto* cfg = app.add_subcommand("config", "Print the documented default configuration");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_generate(g);
    if (*des) return cmd_design(g, fallback);
    if (*sim) return cmd_simulate(g, dump, runs);
    if (*rep) return cmd_report(g);
    if (*cfg) {
      std::cout << default_config_text();
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
