// One PASS/FAIL line per acceptance criterion, followed by indented diagnostics.
// Exit status is 0 when every criterion ran; --strict also fails on FAIL lines.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "sjde/design.hpp"
#include "sjde/io.hpp"
#include "sjde/plot.hpp"
#include "sjde/simulate.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace sjde;

namespace {

using Clock = std::chrono::steady_clock;

std::ofstream report_file;

void emit(const char* line) {
  std::printf("%s\n", line);
  std::fflush(stdout);
  if (report_file) report_file << line << '\n' << std::flush;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Report {
  int failed = 0;
  void criterion(int id, bool pass, const std::string& what, double secs, double limit) {
    const bool in_time = secs <= limit;
    const bool ok = pass && in_time;
    if (!ok) ++failed;
    char buf[512];
    std::snprintf(buf, sizeof buf, "CRITERION %d %s  %s  (%.1fs, limit %.0fs%s)", id, ok ? "PASS" : "FAIL", what.c_str(),
                  secs, limit, in_time ? "" : ", over time");
    emit(buf);
  }
};

void info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void info(const char* fmt, ...) {
  char buf[1024] = "    ";
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf + 4, sizeof buf - 4, fmt, args);
  va_end(args);
  emit(buf);
}

// 1. Analytic oracles.
void criterion_analytic(Report& r) {
  const auto t0 = Clock::now();
  bool ok = true;
  auto lap = t0;
  auto timed = [&]() {
    const double secs = seconds_since(lap);
    lap = Clock::now();
    ok = ok && secs < 1.0;
    return secs;
  };

  const auto single = compute_state_stats<double>(Eigen::MatrixXd::Ones(1, 1), 4.0, 50);
  double var_err = 0;
  for (int n = 1; n <= 50; ++n) var_err = std::max(var_err, std::abs(single.state_var(0, n) - 16.0 / n));
  info("single-node state variance vs sigma^2/n: max error %.3g (tol 1e-12), %.3fs", var_err, timed());
  ok = ok && var_err <= 1e-12;

  const auto g = generate_geometric_network(20, 0.3, 1);
  const Eigen::MatrixXd w = equal_weights(g);
  const double row_err = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  info("weight rows sum to 1: max error %.3g (tol 1e-12), %.3fs", row_err, timed());
  ok = ok && row_err <= 1e-12;

  Model m;
  double post_err = 0;
  int points = 0;
  for (double sv : {16.0, 4.0, 1.0, 0.25, 0.05}) {
    for (int a = 0; a < 10; ++a, ++points) {
      const double s = -4.5 + a;
      std::array<double, 2> ev{}, mean{}, var{};
      for (int i = 0; i < 2; ++i) {
        const double v2 = m.prior_std[i] * m.prior_std[i];
        const double lo = std::min(m.prior_mean[i] - 14 * m.prior_std[i], s - 14 * std::sqrt(sv));
        const double hi = std::max(m.prior_mean[i] + 14 * m.prior_std[i], s + 14 * std::sqrt(sv));
        auto joint = [&](double t) { return oracle::normal_pdf(s, t, sv) * oracle::normal_pdf(t, m.prior_mean[i], v2); };
        const double z = oracle::simpson(joint, lo, hi, 40000);
        mean[i] = oracle::simpson([&](double t) { return t * joint(t); }, lo, hi, 40000) / z;
        var[i] = oracle::simpson([&](double t) { return (t - mean[i]) * (t - mean[i]) * joint(t); }, lo, hi, 40000) / z;
        ev[i] = m.prior_prob[i] * z;
      }
      const auto p = hypothesis_posterior(s, sv, m);
      for (int i = 0; i < 2; ++i) {
        const auto post = theta_posterior(s, sv, m, i);
        post_err = std::max({post_err, std::abs(p[i] - ev[i] / (ev[0] + ev[1])), std::abs(post.mean - mean[i]),
                             std::abs(post.var - var[i])});
      }
    }
  }
  info("conjugate posterior vs quadrature over %d (s, state_var) points: max error %.3g (tol 1e-8), %.3fs", points,
       post_err, timed());
  ok = ok && post_err <= 1e-8;

  const auto stats = compute_state_stats<double>(w, 4.0, 50);
  double cov_err = 0;
  for (int n = 1; n <= 50; ++n)
    cov_err = std::max(cov_err, (stats.covariance[n] - oracle::direct_covariance(w, 4.0, n)).cwiseAbs().maxCoeff());
  info("Sigma_n recursion vs direct power sum, K=20, N=50: max error %.3g (tol 1e-10), %.3fs", cov_err, timed());
  ok = ok && cov_err <= 1e-10;

  r.criterion(1, ok, "analytic oracles (each under 1s)", seconds_since(t0), 4.0);
}

// 2. Brute-force DP oracle.
void criterion_brute_force(Report& r) {
  const auto t0 = Clock::now();
  double dp_err = 0, eval_err = 0;
  int policies = 0;
  for (int horizon : {1, 2}) {
    for (bool at_start : {false, true}) {
      auto t = fixture::toy_instance(horizon);
      std::vector<Eigen::ArrayXd> best;
      fixture::brute_force_start_values(t, at_start, &best);
      const PolicyTable p = backward_induction(t.costs, t.transitions, t.post, at_start);
      for (int n = 0; n <= horizon; ++n) dp_err = std::max(dp_err, (p.value[n] - best[n]).abs().maxCoeff());
    }
    const auto kernels = fixture::toy_conditional(horizon);
    auto t = fixture::toy_instance(horizon);
    PolicyTable p = backward_induction(t.costs, t.transitions, t.post);
    const int cells = 3 * (horizon - 1);
    for (int mask = 0; mask < (1 << (2 * cells)); ++mask, ++policies) {
      for (int n = 1; n < horizon; ++n)
        for (int j = 0; j < 3; ++j) {
          const int bit = 3 * (n - 1) + j;
          p.stop[n][j] = (mask >> bit) & 1;
          p.decide[n][j] = (mask >> (cells + bit)) & 1;
        }
      const auto e = evaluate_policy_on_grid(p, kernels, t.post.prior_prob);
      const auto b = fixture::enumerate_paths(p, kernels, t.post.prior_prob);
      for (int i = 0; i < 2; ++i)
        eval_err = std::max({eval_err, std::abs(e.alpha[i] - b.alpha[i]), std::abs(e.mse[i] - b.mse[i])});
      eval_err = std::max(eval_err, std::abs(e.asn - b.asn));
    }
  }
  info("backward induction vs exhaustive stop/continue enumeration: max error %.3g (tol 1e-9)", dp_err);
  info("grid evaluator vs path enumeration over %d policies: max error %.3g (tol 1e-9)", policies, eval_err);
  r.criterion(2, dp_err <= 1e-9 && eval_err <= 1e-9, "brute-force DP oracle (3-point grid, N <= 2)", seconds_since(t0),
              1.0);
}

// 3. Sampler correctness.
void criterion_sampler(Report& r) {
  const auto t0 = Clock::now();
  const auto g = generate_geometric_network(5, 0.6, 7);
  Model m;
  const auto stats = compute_state_stats<double>(equal_weights(g), m.sigma, 20);
  const int count = 100000;
  bool ok = true;
  struct Case {
    int k, n;
    double s;
  };
  for (const Case c : {Case{0, 1, -0.4}, Case{2, 6, 0.7}, Case{4, 15, 1.9}}) {
    Rng rng = make_stream(2024, {static_cast<std::uint64_t>(c.k), static_cast<std::uint64_t>(c.n)});
    const auto draws = sample_posterior_predictive(c.s, stats, c.k, c.n, m, count, rng);
    const double sv = stats.state_var(c.k, c.n), w = stats.self_weight(c.k);
    const auto vars = predictive_component_variances(stats, c.k, c.n);
    const auto prob = hypothesis_posterior(c.s, sv, m);
    const std::array<GaussianPosterior<double>, 2> post{theta_posterior(c.s, sv, m, 0), theta_posterior(c.s, sv, m, 1)};
    auto mixture = [&](double scale, double shift, double extra) {
      return [=](double x) {
        double f = 0;
        for (int i = 0; i < 2; ++i)
          f += prob[i] * oracle::normal_cdf(x, shift + scale * post[i].mean,
                                            std::sqrt(scale * scale * post[i].var + extra));
        return f;
      };
    };
    std::vector<double> theta, nb, inn, next;
    for (const auto& d : draws) {
      theta.push_back(d.theta);
      nb.push_back(d.neighbor);
      inn.push_back(d.innovation);
      next.push_back((c.n * w * c.s + c.n * d.neighbor + d.innovation) / (c.n + 1.0));
    }
    const double nn = c.n;
    const double pv[4] = {
        oracle::kolmogorov_pvalue(oracle::ks_statistic(theta, mixture(1, 0, 0)), count),
        oracle::kolmogorov_pvalue(oracle::ks_statistic(nb, mixture(1 - w, 0, vars.neighbor_var)), count),
        oracle::kolmogorov_pvalue(oracle::ks_statistic(inn, mixture(1, 0, vars.innovation_var)), count),
        oracle::kolmogorov_pvalue(
            oracle::ks_statistic(next, mixture((nn * (1 - w) + 1) / (nn + 1), nn * w * c.s / (nn + 1),
                                               (nn * nn * vars.neighbor_var + vars.innovation_var) /
                                                   ((nn + 1) * (nn + 1)))),
            count)};
    info("node %d, n=%d, s=%.2f: KS p-values theta %.3f, neighbour %.3f, innovation %.3f, next state %.3f", c.k + 1,
         c.n, c.s, pv[0], pv[1], pv[2], pv[3]);
    for (double p : pv) ok = ok && p > 1e-3;
  }
  r.criterion(3, ok, "posterior-predictive sampler KS tests (level 1e-3, 1e5 draws)", seconds_since(t0), 60.0);
}

struct DeskDesign {
  Model model;
  Eigen::MatrixXd weights;
  DesignSpec spec;
  std::vector<NodeContext> contexts;
  std::vector<DesignResult> results;
  std::vector<PolicyTable> policies;
  double seconds = 0;
};

DeskDesign desk_design(int workers) {
  const auto t0 = Clock::now();
  DeskDesign d;
  const auto g = generate_geometric_network(5, 0.6, 7);
  d.weights = equal_weights(g);
  d.spec.horizon = 20;
  d.spec.grid = StateGrid{-9, 9, 601};
  d.spec.samples = 10000;
  d.spec.constraints.alpha = {1e-2, 1e-2};
  d.spec.constraints.beta = {0.2, 0.2};
  const auto stats = compute_state_stats<double>(d.weights, d.model.sigma, d.spec.horizon);
  for (int k = 0; k < 5; ++k) {
    d.contexts.push_back(build_node_context(d.spec, d.model, stats, k, workers));
    d.results.push_back(solve_coefficients(d.spec, d.contexts.back(), StagedStoppingSolver(1e-9)));
    d.policies.push_back(d.results.back().policy);
  }
  d.seconds = seconds_since(t0);
  return d;
}

// 4. Complementary slackness at desk scale.
void criterion_slackness(Report& r, const DeskDesign& d, int workers) {
  const auto t0 = Clock::now();
  const Eigen::Vector4d targets = d.spec.constraints.packed();
  const char* names[4] = {"alpha0", "alpha1", "mse0", "mse1"};
  bool slack_ok = true;
  for (int k = 0; k < 5; ++k) {
    const auto& res = d.results[k];
    const Eigen::Vector4d c = res.coefficients.packed();
    const auto e = evaluate_policy_on_grid(res.policy, d.contexts[k].kernels(StepModel::predictive),
                                           d.model.prior_prob, workers);
    const auto en = evaluate_policy_on_grid(res.policy, d.contexts[k].kernels(StepModel::network),
                                            d.model.prior_prob, workers);
    const Eigen::Vector4d err = packed_errors(e), errn = packed_errors(en);
    std::ostringstream line;
    for (int q = 0; q < 4; ++q) {
      const bool active = c[q] > 1e-6;
      const double rel = (err[q] - targets[q]) / targets[q];
      const bool ok = active ? std::abs(rel) <= 0.02 : err[q] < targets[q];
      slack_ok = slack_ok && ok;
      char buf[160];
      std::snprintf(buf, sizeof buf, " %s %s c=%.3g grid=%.4g (%+.1f%%) design-kernel=%.4g network-kernel=%.4g;", names[q],
                    ok ? "ok" : "MISS", c[q], err[q], 100 * rel, res.design_errors[q], errn[q]);
      line << buf;
    }
    info("node %d:%s asn %.3f", k + 1, line.str().c_str(), e.asn);
  }

  bool dual_ok = true;
  for (int k = 0; k < 5; ++k) {
    DualAscentOptions opt;
    opt.max_iterations = 200;
    opt.workers = workers;
    const auto res = dual_ascent_fallback(d.spec, d.contexts[k], opt);
    const Eigen::Vector4d err = packed_errors(res.evaluation), c = res.coefficients.packed();
    bool ok = true;
    std::ostringstream line;
    for (int q = 0; q < 4; ++q) {
      const double rel = (err[q] - targets[q]) / targets[q];
      ok = ok && (c[q] > 1e-6 ? std::abs(rel) <= 0.10 : rel <= 0.10);
      char buf[96];
      std::snprintf(buf, sizeof buf, " %s=%.4g (%+.1f%%)", names[q], err[q], 100 * rel);
      line << buf;
    }
    dual_ok = dual_ok && ok;
    info("dual ascent node %d: %s after %zu iterations,%s asn %.3f", k + 1, ok ? "ok" : "MISS", res.trajectory.size(),
         line.str().c_str(), res.evaluation.asn);
  }
  info("LP design: %.1fs for 5 nodes (transition sampling dominates)", d.seconds);
  r.criterion(4, slack_ok && dual_ok,
              std::string("complementary slackness within 2% [") + (slack_ok ? "met" : "not met") +
                  "], dual ascent within 10% [" + (dual_ok ? "met" : "not met") + "]",
              seconds_since(t0) + d.seconds, 600.0);
}

// 5. Monte Carlo vs grid evaluator, and worker-count determinism.
void criterion_cross(Report& r, const DeskDesign& d, int workers) {
  const auto t0 = Clock::now();
  SimulationOptions opt;
  opt.workers = workers;
  const std::uint64_t runs = 100000, seed = 2718;
  const auto s = monte_carlo(d.policies, d.weights, d.model, runs, seed, opt);
  double worst = 0, worst_pred = 0;
  for (int k = 0; k < 5; ++k) {
    const auto& m = s.nodes[k];
    auto zs = [&](const GridEvaluation& e) {
      return std::array<double, 5>{(m.alpha[0] - e.alpha[0]) / m.alpha_se[0], (m.alpha[1] - e.alpha[1]) / m.alpha_se[1],
                                   (m.mse[0] - e.mse[0]) / m.mse_se[0], (m.mse[1] - e.mse[1]) / m.mse_se[1],
                                   (m.asn - e.asn) / m.asn_se};
    };
    const auto en = evaluate_policy_on_grid(d.policies[k], d.contexts[k].kernels(StepModel::network), d.model.prior_prob,
                                            workers);
    const auto ep = evaluate_policy_on_grid(d.policies[k], d.contexts[k].kernels(StepModel::predictive),
                                            d.model.prior_prob, workers);
    const auto z = zs(en), zp = zs(ep);
    for (int q = 0; q < 5; ++q) {
      worst = std::max(worst, std::abs(z[q]));
      worst_pred = std::max(worst_pred, std::abs(zp[q]));
    }
    info("node %d: MC alpha=(%.5f, %.5f) mse=(%.4f, %.4f) asn=%.3f | z vs grid: %+.2f %+.2f %+.2f %+.2f %+.2f", k + 1,
         m.alpha[0], m.alpha[1], m.mse[0], m.mse[1], m.asn, z[0], z[1], z[2], z[3], z[4]);
  }
  info("max |z| against the grid evaluator with network-matched kernels: %.2f (tol 3)", worst);
  info("for reference, max |z| against the predictive design kernels: %.2f", worst_pred);

  SimulationOptions other = opt;
  other.workers = workers == 1 ? 3 : 1;
  const auto s2 = monte_carlo(d.policies, d.weights, d.model, runs, seed, other);
  std::ostringstream a, b;
  write_results_csv(a, s);
  write_results_csv(b, s2);
  const bool identical = a.str() == b.str();
  info("results CSV with %d vs %d workers: %s", opt.workers, other.workers, identical ? "byte-identical" : "DIFFERENT");
  r.criterion(5, worst <= 3.0 && identical, "Monte Carlo (1e5 runs) vs grid evaluator within 3 SE; deterministic CSV",
              seconds_since(t0), 600.0);
}

// 6. Paper-scale reproduction (optional).
struct PaperOptions {
  std::uint64_t runs = 100000;
  int samples = 50000;
  int points = 1900;
  std::string out_dir = "paper_scale";
};

void criterion_paper(Report& r, int workers, const PaperOptions& po) {
  const auto t0 = Clock::now();
  Model m;
  DesignSpec spec;  // defaults: N=50, grid [-9,9] x 1900, n_samp 5e4, alpha 1e-3, beta 0.1
  spec.samples = po.samples;
  spec.grid.points = po.points;
  const std::string& out_dir = po.out_dir;
  const std::uint64_t runs = po.runs;
  if (po.samples != 50000 || po.points != 1900)
    info("reduced scale: n_samp %d, %d grid points (results are not the reference configuration)", po.samples,
         po.points);
  const auto g = generate_geometric_network(20, 0.3, 1);
  const Eigen::MatrixXd w = equal_weights(g);
  const auto stats = compute_state_stats<double>(w, m.sigma, spec.horizon);
  std::filesystem::create_directories(out_dir);
  std::vector<PolicyTable> policies;
  bool band_ok = true;
  for (int k = 0; k < 20; ++k) {
    const auto ctx = build_node_context(spec, m, stats, k, workers);
    auto res = solve_coefficients(spec, ctx, StagedStoppingSolver(spec.tolerance));
    // Band measured on the plotted window |s| <= 4; the far tails stop at once but are practically unreachable.
    const int lo = spec.grid.nearest(-4.0), hi = spec.grid.nearest(4.0);
    int band = 0;
    while (band < spec.horizon && !res.policy.stop[band + 1].segment(lo, hi - lo + 1).any()) ++band;
    bool h0 = false, h1 = false, cont = false;
    for (int n = 1; n < spec.horizon; ++n)
      for (int j = 0; j < spec.grid.points; ++j) {
        if (!res.policy.stop[n][j]) cont = true;
        else if (res.policy.decide[n][j]) h1 = true;
        else h0 = true;
      }
    band_ok = band_ok && band >= 1 && h0 && h1 && cont;
    info("node %d designed (%.0fs): no-stop band n <= %d, regions continue/H0/H1 %d/%d/%d", k + 1, seconds_since(t0),
         band, cont, h0, h1);
    std::ofstream(std::filesystem::path(out_dir) / ("policy_node_" + std::to_string(k + 1) + ".svg"))
        << policy_region_svg(res.policy);
    policies.push_back(std::move(res.policy));
  }
  SimulationOptions opt;
  opt.workers = workers;
  const auto s = monte_carlo(policies, w, m, runs, 1, opt);
  std::ofstream(std::filesystem::path(out_dir) / "results.svg") << results_svg(s, spec.constraints, spec.horizon);
  bool ok = band_ok;
  for (int k = 0; k < 20; ++k) {
    const auto& x = s.nodes[k];
    for (int i = 0; i < 2; ++i) {
      ok = ok && x.mse[i] >= 0.08 && x.mse[i] <= 0.12;
      ok = ok && x.alpha[i] >= 1e-4 && x.alpha[i] <= 1e-2;
    }
    ok = ok && x.asn < spec.horizon;
    info("node %d: alpha=(%.2e, %.2e) mse=(%.4f, %.4f) asn=%.2f", k + 1, x.alpha[0], x.alpha[1], x.mse[0], x.mse[1],
         x.asn);
  }
  for (int i = 0; i < 2; ++i) ok = ok && s.network.alpha[i] >= 1e-4 && s.network.alpha[i] <= 5e-3;
  info("network: alpha=(%.2e, %.2e) mse=(%.4f, %.4f) asn=%.2f", s.network.alpha[0], s.network.alpha[1],
       s.network.mse[0], s.network.mse[1], s.network.asn);
  r.criterion(6, ok, "paper-scale reproduction", seconds_since(t0), 1e9);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  bool strict = false, paper = false;
  int workers = std::max(1u, std::thread::hardware_concurrency());
  PaperOptions po;
  std::vector<int> only;
  std::string report;
  app.add_flag("--strict", strict, "Exit nonzero if any criterion fails");
  app.add_flag("--paper", paper, "Also run the paper-scale reproduction (CPU-hours)");
  app.add_option("--paper-runs", po.runs, "Monte Carlo runs for the paper-scale check");
  app.add_option("--paper-samples", po.samples, "Override n_samp for a reduced paper-scale run");
  app.add_option("--paper-points", po.points, "Override the grid size for a reduced paper-scale run");
  app.add_option("--paper-out", po.out_dir, "Directory for paper-scale plots");
  app.add_option("--workers", workers, "Worker threads");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--report", report, "Also write the report to this file");
  CLI11_PARSE(app, argc, argv);

  if (!report.empty()) report_file.open(report);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  Report r;
  try {
    if (wanted(1)) criterion_analytic(r);
    if (wanted(2)) criterion_brute_force(r);
    if (wanted(3)) criterion_sampler(r);
    if (wanted(4) || wanted(5)) {
      const DeskDesign d = desk_design(workers);
      if (wanted(4)) criterion_slackness(r, d, workers);
      if (wanted(5)) criterion_cross(r, d, workers);
    }
    if (paper && wanted(6)) {
      criterion_paper(r, workers, po);
    } else if (wanted(6)) {
      emit("CRITERION 6 SKIP  paper-scale reproduction (run with --paper)");
    }
  } catch (const std::exception& e) {
    emit((std::string("acceptance run aborted: ") + e.what()).c_str());
    return 2;
  }
  emit((std::to_string(r.failed) + " criterion failure(s)").c_str());
  return strict && r.failed > 0 ? 1 : 0;
}
